#include "emorette/bot.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace emorette {

namespace fs = std::filesystem;

DialogueEngine BotBundle::engine() const {
  if (!graph) throw std::logic_error("bot has no loaded graph");
  return DialogueEngine(graph, make_default_pipeline(resources), blocklist);
}

std::vector<FlowSource> read_flow_sources(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".flow") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .flow files in " + dir.string());
  std::vector<FlowSource> out;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + f.string());
    std::stringstream buf;
    buf << in.rdbuf();
    out.push_back({f.filename().string(), buf.str()});
  }
  return out;
}

BotBundle load_bot_resources(const fs::path& dir) {
  BotBundle b;
  b.dir = dir;
  auto has = [&](const char* name) { return fs::is_regular_file(dir / name); };
  auto path = [&](const char* name) { return (dir / name).string(); };
  b.ontology = std::make_shared<const Ontology>(has("ontology.txt") ? Ontology::load_file(path("ontology.txt"))
                                                                     : Ontology());
  if (has("sentiment.lex")) {
    b.resources.lexicon = std::make_shared<const SentimentLexicon>(SentimentLexicon::load_file(path("sentiment.lex")));
  }
  if (has("entities.tsv")) {
    b.resources.entities = std::make_shared<const EntityIndex>(EntityIndex::load_file(path("entities.tsv")));
  }
  if (has("qa.tsv")) {
    b.resources.qa = std::make_shared<const CannedQaClient>(CannedQaClient::load_file(path("qa.tsv")));
  }
  if (has("blocklist.txt")) b.blocklist = Blocklist::load_file(path("blocklist.txt"));
  b.resources = with_defaults(std::move(b.resources));
  return b;
}

BotBundle load_bot(const fs::path& dir) {
  BotBundle b = load_bot_resources(dir);
  b.sources = read_flow_sources(dir);
  b.graph = load_flows(b.sources, b.ontology);
  return b;
}

}  // namespace emorette
