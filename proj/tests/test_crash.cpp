#include <gtest/gtest.h>

#include "harness.hpp"

using namespace emorette;

namespace {

std::vector<std::string> tail_lines(const std::vector<std::string>& all, size_t from) {
  return {all.begin() + static_cast<long>(from), all.end()};
}

}  // namespace

class CrashAfterSave : public ::testing::TestWithParam<int> {};

TEST_P(CrashAfterSave, RestartContinuesTheScript) {
  const int k = GetParam();
  const uint64_t seed = 5;
  const auto script = harness::covid_script();
  const auto dir = harness::fresh_dir("crash");

  {
    harness::ChildServer doomed(dir, seed, k);
    HttpDriver driver("127.0.0.1", doomed.port(), "crash");
    EXPECT_ANY_THROW(run_script(script, driver));
    EXPECT_EQ(doomed.wait(), harness::ChildServer::kCrashCode);
  }
  EXPECT_EQ(DiskStore(dir).latest_turn("crash"), k);

  ScriptRun resumed;
  {
    harness::ChildServer server(dir, seed);
    HttpDriver driver("127.0.0.1", server.port(), "crash");
    resumed = run_script(script, driver, static_cast<size_t>(k));
  }
  std::string failures;
  for (const auto& f : resumed.failures) failures += f.str() + "\n";
  EXPECT_TRUE(resumed.ok()) << failures;

  const auto final_state = DiskStore(dir).load_latest("crash");
  ASSERT_TRUE(final_state);
  EXPECT_EQ(final_state->turn_index, static_cast<int>(script.user_count()));
  for (const char* key : {"student", "remote", "need_grocery", "activity", "close_to_mom", "likes_school"}) {
    EXPECT_TRUE(final_state->variables.get(key)) << key;
  }

  // The replies after the restart are the ones an uninterrupted run gives.
  harness::ThreadServer reference(std::make_shared<MemoryStore>(), seed);
  HttpDriver ref_driver("127.0.0.1", reference.port(), "crash");
  const auto full = run_script(script, ref_driver);
  EXPECT_EQ(resumed.transcript, tail_lines(full.transcript, 1 + 2 * static_cast<size_t>(k)));
  std::filesystem::remove_all(dir);
}

INSTANTIATE_TEST_SUITE_P(Turns, CrashAfterSave, ::testing::Values(1, 4, 7, 8));
