#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emorette/engine.hpp"

namespace emorette {

class ScriptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Replay scripts. One entry per line, assertions indented below it:
//
//   alias CoS covid_sympathy
//   system E1
//     says "Has your life changed much?"
//     stack []
//   user U1 "Yeah my school has online courses now"
//     learned student=True remote=True
//     stack [CoS]
//
// System entries after a user entry describe that turn's segments in order
// (the leading ones describe the opening). `learned` lists the exact writes
// of the step (`learned none` for no writes). `stack` is bottom to top:
// after the user step for user entries, before the segment for system
// entries. '#' starts a comment line.
struct ScriptExpect {
  std::optional<std::map<std::string, std::string>> learned;  // canonical var -> rendered value
  std::optional<std::vector<std::string>> stack;
  std::optional<std::string> says;
};

struct ScriptEntry {
  enum class Kind { kSystem, kUser };
  Kind kind = Kind::kSystem;
  std::string label;
  std::string text;  // user utterance
  ScriptExpect expect;
  int line = 0;
};

struct Script {
  std::string file;
  std::map<std::string, std::string> aliases;
  std::vector<ScriptEntry> entries;

  size_t user_count() const;
  std::vector<std::string> utterances() const;
};

Script parse_script(std::string_view text, std::string file = "<script>");
Script load_script(const std::filesystem::path& path);

struct TurnObservation {
  std::string response;
  std::vector<Step> steps;
};

// Something that can hold one conversation: the engine directly, the
// service in-process, or a server over HTTP.
class ScriptDriver {
 public:
  virtual ~ScriptDriver() = default;
  virtual TurnObservation open() = 0;
  virtual TurnObservation send(const std::string& utterance) = 0;
};

class EngineDriver : public ScriptDriver {
 public:
  EngineDriver(const DialogueEngine& engine, SessionState& session)
      : engine_(engine), session_(session) {}
  TurnObservation open() override;
  TurnObservation send(const std::string& utterance) override;

 private:
  const DialogueEngine& engine_;
  SessionState& session_;
};

struct ScriptFailure {
  std::string label;
  int line = 0;
  std::string what;
  std::string expected;
  std::string actual;

  std::string str() const;
};

struct ScriptRun {
  std::vector<std::string> transcript;  // "E: ..." and "U: ..." lines
  std::vector<ScriptFailure> failures;

  bool ok() const { return failures.empty(); }
  std::string transcript_text() const;
};

// Plays the script through the driver and checks every assertion.
// `resume_after` user entries are treated as already sent: they, the
// opening, and their segments are skipped. Driver exceptions propagate.
ScriptRun run_script(const Script& script, ScriptDriver& driver, size_t resume_after = 0);

}  // namespace emorette
