#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "emorette/analytics.hpp"
#include "emorette/core.hpp"

namespace emorette {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// save_turn with a turn_index not above the last stored one.
class OutOfOrderWrite : public StoreError {
 public:
  using StoreError::StoreError;
};

// A snapshot failed its checksum or could not be decoded.
class CorruptRecord : public StoreError {
 public:
  using StoreError::StoreError;
};

// Session snapshots as JSON. Values keep their JSON type (string, bool,
// number), so the variable table round-trips exactly.
std::string session_to_json(const SessionState& s);
SessionState session_from_json(std::string_view text);

struct UserRecord {
  std::string user_id;
  VariableTable attributes;
  std::string updated_at;  // ISO-8601 UTC
  bool operator==(const UserRecord&) const = default;
};

class Store {
 public:
  virtual ~Store() = default;

  // Durable before return. Throws OutOfOrderWrite or StoreError.
  virtual void save_turn(const SessionState& s) = 0;
  virtual std::optional<SessionState> load_latest(const std::string& session_id) = 0;
  virtual std::optional<int> latest_turn(const std::string& session_id) = 0;
  virtual std::vector<std::string> session_ids() = 0;

  // Per-key last-write-wins.
  virtual UserRecord merge_user_attributes(const std::string& user_id, const VariableTable& attrs) = 0;
  virtual std::optional<UserRecord> load_user(const std::string& user_id) = 0;

  // Upsert keyed by conversation_id.
  virtual void put_conversation(const ConversationRecord& r) = 0;
  virtual std::vector<ConversationRecord> conversations() = 0;
};

class MemoryStore : public Store {
 public:
  void save_turn(const SessionState& s) override;
  std::optional<SessionState> load_latest(const std::string& session_id) override;
  std::optional<int> latest_turn(const std::string& session_id) override;
  std::vector<std::string> session_ids() override;
  UserRecord merge_user_attributes(const std::string& user_id, const VariableTable& attrs) override;
  std::optional<UserRecord> load_user(const std::string& user_id) override;
  void put_conversation(const ConversationRecord& r) override;
  std::vector<ConversationRecord> conversations() override;

 private:
  std::mutex mu_;
  // Snapshots are kept serialized so reads never alias live state.
  std::map<std::string, std::map<int, std::string>> turns_;
  std::map<std::string, UserRecord> users_;
  std::map<std::string, ConversationRecord> conversations_;
};

// Layout under the root directory:
//   sessions/<id>/NNNN.turn       {"checksum": "crc32:xxxxxxxx", "record": {...}}
//                                 record: session_id, turn_index, saved_at, state.
//                                 The CRC covers the compact dump of record.
//   user/<id>.json                attribute files
//   conversations/<id>.json       one record per conversation
//   conversations.jsonl           all records, rewritten on every update
// Ids are percent-encoded into file names. Every file is written to a
// temporary name, fsynced and renamed into place.
class DiskStore : public Store {
 public:
  explicit DiskStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path session_dir(const std::string& session_id) const;
  std::filesystem::path conversations_log() const { return root_ / "conversations.jsonl"; }

  void save_turn(const SessionState& s) override;
  std::optional<SessionState> load_latest(const std::string& session_id) override;
  std::optional<int> latest_turn(const std::string& session_id) override;
  std::vector<std::string> session_ids() override;
  UserRecord merge_user_attributes(const std::string& user_id, const VariableTable& attrs) override;
  std::optional<UserRecord> load_user(const std::string& user_id) override;
  void put_conversation(const ConversationRecord& r) override;
  std::vector<ConversationRecord> conversations() override;

 private:
  std::filesystem::path root_;
  std::mutex users_mu_;
  std::mutex conversations_mu_;
};

std::string encode_path_component(const std::string& id);
std::string decode_path_component(const std::string& name);

// Writes data to path via tmp + fsync + rename + directory fsync.
void write_file_atomic(const std::filesystem::path& path, const std::string& data);

}  // namespace emorette
