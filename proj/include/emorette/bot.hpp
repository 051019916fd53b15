#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "emorette/engine.hpp"
#include "emorette/flow.hpp"

namespace emorette {

// Everything a running bot needs, loaded from one directory:
//   *.flow          dialogue graph files (sorted by name)
//   ontology.txt    entity ontology
//   sentiment.lex   sentiment lexicon
//   entities.tsv    entity surface forms
//   blocklist.txt   blocked phrases
//   qa.tsv          canned question answers
// Every file except the flows is optional.
struct BotBundle {
  std::filesystem::path dir;
  std::vector<FlowSource> sources;
  std::shared_ptr<const Ontology> ontology;
  NlpResources resources;
  Blocklist blocklist;
  std::shared_ptr<const DialogueGraph> graph;

  DialogueEngine engine() const;
};

std::vector<FlowSource> read_flow_sources(const std::filesystem::path& dir);

// Loads resources, then the flows. Throws FlowError on flow problems and
// std::runtime_error on unreadable resources.
BotBundle load_bot(const std::filesystem::path& dir);

// Resources only; the flows are left unloaded (graph is null).
BotBundle load_bot_resources(const std::filesystem::path& dir);

}  // namespace emorette
