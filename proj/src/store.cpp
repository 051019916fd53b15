#include "emorette/store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace emorette {

using namespace detail;
namespace fs = std::filesystem;

namespace {

json opt_str(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> opt_str_from(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string crc_hex(const std::string& data) {
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data.data()),
                          static_cast<uInt>(data.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return std::string("crc32:") + buf;
}

json session_json(const SessionState& s) {
  json j;
  j["session_id"] = s.session_id;
  j["user_id"] = opt_str(s.user_id);
  j["variant"] = opt_str(s.variant);
  j["current_state"] = s.current_state;
  j["variables"] = vars_json(s.variables);
  j["stack"] = stack_json(s.stack);
  j["turn_index"] = s.turn_index;
  j["rng_seed"] = s.rng_seed;
  j["rng_draws"] = s.rng_draws;
  json hist = json::array();
  for (const auto& h : s.history) {
    hist.push_back({{"speaker", h.speaker == Speaker::kUser ? "user" : "system"}, {"text", h.text}});
  }
  j["history"] = std::move(hist);
  j["unmatched_streak"] = s.unmatched_streak;
  j["last_response"] = s.last_response;
  j["last_prompt"] = s.last_prompt;
  j["last_intent"] = dist_json(s.last_intent);
  j["last_topic"] = dist_json(s.last_topic);
  j["components"] = std::vector<std::string>(s.components.begin(), s.components.end());
  return j;
}

SessionState session_from(const json& j) {
  SessionState s;
  s.session_id = j.at("session_id").get<std::string>();
  s.user_id = opt_str_from(j, "user_id");
  s.variant = opt_str_from(j, "variant");
  s.current_state = j.at("current_state").get<std::string>();
  s.variables = vars_from(j.at("variables"));
  s.stack = stack_from(j.at("stack"));
  s.turn_index = j.at("turn_index").get<int>();
  s.rng_seed = j.at("rng_seed").get<uint64_t>();
  s.rng_draws = j.at("rng_draws").get<uint64_t>();
  for (const auto& h : j.at("history")) {
    const auto sp = h.at("speaker").get<std::string>();
    s.history.push_back({sp == "user" ? Speaker::kUser : Speaker::kSystem, h.at("text").get<std::string>()});
  }
  s.unmatched_streak = j.value("unmatched_streak", 0);
  s.last_response = j.value("last_response", std::string());
  s.last_prompt = j.value("last_prompt", std::string());
  if (j.contains("last_intent")) s.last_intent = dist_from(j["last_intent"]);
  if (j.contains("last_topic")) s.last_topic = dist_from(j["last_topic"]);
  if (j.contains("components")) {
    for (const auto& c : j["components"]) s.components.insert(c.get<std::string>());
  }
  return s;
}

json user_json(const UserRecord& u) {
  return {{"user_id", u.user_id}, {"attributes", vars_json(u.attributes)}, {"updated_at", u.updated_at}};
}

UserRecord user_from(const json& j) {
  UserRecord u;
  u.user_id = j.at("user_id").get<std::string>();
  u.attributes = vars_from(j.at("attributes"));
  u.updated_at = j.value("updated_at", std::string());
  return u;
}

void merge_into(UserRecord& rec, const VariableTable& attrs) {
  for (const auto& [k, v] : attrs.entries()) rec.attributes.set(k, v);
  rec.updated_at = now_iso();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StoreError("cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::optional<int> turn_of(const fs::path& p) {
  if (p.extension() != ".turn") return std::nullopt;
  const std::string stem = p.stem().string();
  if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) return std::nullopt;
  return std::stoi(stem);
}

std::string turn_file_name(int turn) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d.turn", turn);
  return buf;
}

}  // namespace

std::string session_to_json(const SessionState& s) { return dump(session_json(s)); }

SessionState session_from_json(std::string_view text) {
  try {
    return session_from(json::parse(text.begin(), text.end()));
  } catch (const json::exception& e) {
    throw CorruptRecord(std::string("bad session snapshot: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CorruptRecord(std::string("bad session snapshot: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// MemoryStore
// ---------------------------------------------------------------------------

void MemoryStore::save_turn(const SessionState& s) {
  std::lock_guard lock(mu_);
  auto& turns = turns_[s.session_id];
  if (!turns.empty() && s.turn_index <= turns.rbegin()->first) {
    throw OutOfOrderWrite("session '" + s.session_id + "': turn " + std::to_string(s.turn_index) +
                          " is not after stored turn " + std::to_string(turns.rbegin()->first));
  }
  turns[s.turn_index] = session_to_json(s);
}

std::optional<SessionState> MemoryStore::load_latest(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto it = turns_.find(session_id);
  if (it == turns_.end() || it->second.empty()) return std::nullopt;
  return session_from_json(it->second.rbegin()->second);
}

std::optional<int> MemoryStore::latest_turn(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto it = turns_.find(session_id);
  if (it == turns_.end() || it->second.empty()) return std::nullopt;
  return it->second.rbegin()->first;
}

std::vector<std::string> MemoryStore::session_ids() {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, t] : turns_) out.push_back(id);
  return out;
}

UserRecord MemoryStore::merge_user_attributes(const std::string& user_id, const VariableTable& attrs) {
  std::lock_guard lock(mu_);
  auto& rec = users_[user_id];
  rec.user_id = user_id;
  merge_into(rec, attrs);
  return rec;
}

std::optional<UserRecord> MemoryStore::load_user(const std::string& user_id) {
  std::lock_guard lock(mu_);
  auto it = users_.find(user_id);
  if (it == users_.end()) return std::nullopt;
  return it->second;
}

void MemoryStore::put_conversation(const ConversationRecord& r) {
  std::lock_guard lock(mu_);
  conversations_[r.conversation_id] = r;
}

std::vector<ConversationRecord> MemoryStore::conversations() {
  std::lock_guard lock(mu_);
  std::vector<ConversationRecord> out;
  for (const auto& [id, r] : conversations_) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// DiskStore
// ---------------------------------------------------------------------------

std::string encode_path_component(const std::string& id) {
  static const char* kHex = "0123456789ABCDEF";
  std::string out;
  for (size_t i = 0; i < id.size(); ++i) {
    const auto c = static_cast<unsigned char>(id[i]);
    const bool plain = std::isalnum(c) || c == '_' || c == '-' || (c == '.' && i > 0);
    if (plain) {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out.empty() ? "%" : out;
}

std::string decode_path_component(const std::string& name) {
  if (name == "%") return {};
  std::string out;
  for (size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out += static_cast<char>(std::stoi(name.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += name[i];
    }
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& data) {
  const fs::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw StoreError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw StoreError("write failed for " + tmp.string() + ": " + std::strerror(err));
    }
    off += static_cast<size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw StoreError("fsync failed for " + tmp.string() + ": " + std::strerror(err));
  }
  ::close(fd);
  if (::rename(tmp.c_str(), path.c_str()) != 0) {
    throw StoreError("rename to " + path.string() + " failed: " + std::strerror(errno));
  }
  const int dfd = ::open(path.parent_path().c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

DiskStore::DiskStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  for (const char* sub : {"sessions", "user", "conversations"}) {
    fs::create_directories(root_ / sub, ec);
    if (ec) throw StoreError("cannot create " + (root_ / sub).string() + ": " + ec.message());
  }
}

fs::path DiskStore::session_dir(const std::string& session_id) const {
  return root_ / "sessions" / encode_path_component(session_id);
}

std::optional<int> DiskStore::latest_turn(const std::string& session_id) {
  const fs::path dir = session_dir(session_id);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return std::nullopt;
  std::optional<int> best;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (auto t = turn_of(e.path()); t && (!best || *t > *best)) best = t;
  }
  return best;
}

void DiskStore::save_turn(const SessionState& s) {
  if (auto last = latest_turn(s.session_id); last && s.turn_index <= *last) {
    throw OutOfOrderWrite("session '" + s.session_id + "': turn " + std::to_string(s.turn_index) +
                          " is not after stored turn " + std::to_string(*last));
  }
  const fs::path dir = session_dir(s.session_id);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create " + dir.string() + ": " + ec.message());
  json record = {{"session_id", s.session_id},
                 {"turn_index", s.turn_index},
                 {"saved_at", now_iso()},
                 {"state", session_json(s)}};
  const std::string body = dump(record);
  json wrapper = {{"checksum", crc_hex(body)}, {"record", json::parse(body)}};
  write_file_atomic(dir / turn_file_name(s.turn_index), dump(wrapper) + "\n");
}

std::optional<SessionState> DiskStore::load_latest(const std::string& session_id) {
  auto last = latest_turn(session_id);
  if (!last) return std::nullopt;
  const fs::path path = session_dir(session_id) / turn_file_name(*last);
  const std::string where = "session '" + session_id + "' snapshot " + path.string();
  json wrapper;
  try {
    const std::string text = read_file(path);
    wrapper = json::parse(text);
  } catch (const json::exception& e) {
    throw CorruptRecord(where + ": " + e.what());
  }
  try {
    const std::string body = dump(wrapper.at("record"));
    if (wrapper.at("checksum").get<std::string>() != crc_hex(body)) {
      throw CorruptRecord(where + ": checksum mismatch");
    }
    SessionState s = session_from(wrapper.at("record").at("state"));
    if (s.session_id != session_id || s.turn_index != *last) {
      throw CorruptRecord(where + ": snapshot belongs to another session or turn");
    }
    return s;
  } catch (const json::exception& e) {
    throw CorruptRecord(where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CorruptRecord(where + ": " + e.what());
  }
}

std::vector<std::string> DiskStore::session_ids() {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(root_ / "sessions", ec)) {
    if (e.is_directory()) out.push_back(decode_path_component(e.path().filename().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

UserRecord DiskStore::merge_user_attributes(const std::string& user_id, const VariableTable& attrs) {
  std::lock_guard lock(users_mu_);
  UserRecord rec;
  rec.user_id = user_id;
  const fs::path path = root_ / "user" / (encode_path_component(user_id) + ".json");
  if (fs::exists(path)) {
    try {
      rec = user_from(json::parse(read_file(path)));
    } catch (const json::exception& e) {
      throw CorruptRecord("user record " + path.string() + ": " + e.what());
    }
  }
  merge_into(rec, attrs);
  write_file_atomic(path, dump(user_json(rec), 2) + "\n");
  return rec;
}

std::optional<UserRecord> DiskStore::load_user(const std::string& user_id) {
  std::lock_guard lock(users_mu_);
  const fs::path path = root_ / "user" / (encode_path_component(user_id) + ".json");
  if (!fs::exists(path)) return std::nullopt;
  try {
    return user_from(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw CorruptRecord("user record " + path.string() + ": " + e.what());
  }
}

void DiskStore::put_conversation(const ConversationRecord& r) {
  std::lock_guard lock(conversations_mu_);
  write_file_atomic(root_ / "conversations" / (encode_path_component(r.conversation_id) + ".json"),
                    record_to_json(r) + "\n");
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root_ / "conversations")) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) all += read_file(f);
  write_file_atomic(conversations_log(), all);
}

std::vector<ConversationRecord> DiskStore::conversations() {
  std::lock_guard lock(conversations_mu_);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(root_ / "conversations")) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ConversationRecord> out;
  for (const auto& f : files) {
    std::string text = read_file(f);
    try {
      out.push_back(record_from_json(text));
    } catch (const std::exception& e) {
      throw CorruptRecord("conversation record " + f.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace emorette
