#include <doctest.h>

#include <fstream>

#include "pipeline.hpp"
#include "zstad/config.hpp"

using namespace zstad;
using namespace zstad::test;

namespace {
const std::vector<std::string> kSmall = {"--train_videos", "6", "--test_videos", "4", "--length", "128",
                                         "--max_segment_length", "40"};
}

TEST_CASE("edit distance and suggestions") {
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("train", "train") == 0);
  const auto s = suggestions("learning_rat", {"momentum", "learning_rate", "epochs"});
  REQUIRE(s.size() == 1);
  CHECK(s[0] == "learning_rate");
  CHECK(suggestions("zzzzzzzz", {"momentum"}).empty());
}

TEST_CASE("config files") {
  ConfigSet c({{"alpha", "1", ""}, {"names", "a,b", ""}, {"flag", "true", ""}});
  std::istringstream in("# comment\nalpha = 2.5   # trailing\n\nnames = 1, 2 ,3\n");
  c.parse(in, "mem");
  CHECK(c.get_double("alpha") == 2.5);
  CHECK(c.get_int_list("names") == std::vector<int>{1, 2, 3});
  CHECK(c.get_bool("flag"));

  std::istringstream typo("alpah = 3\n");
  try {
    c.parse(typo, "mem");
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("mem:1") != std::string::npos);
    CHECK(msg.find("did you mean 'alpha'") != std::string::npos);
  }
  std::istringstream no_eq("alpha 3\n");
  CHECK_THROWS_AS(c.parse(no_eq, "mem"), UsageError);
  c.set("alpha", "x");
  CHECK_THROWS_AS(c.get_double("alpha"), UsageError);
  c.set("flag", "maybe");
  CHECK_THROWS_AS(c.get_bool("flag"), UsageError);
}

TEST_CASE("exit codes and suggestions") {
  auto r = cli({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("gen-data") != std::string::npos);
  CHECK(cli({"--version"}).code == kExitOk);
  CHECK(cli({}).code == kExitUsage);

  r = cli({"trian"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("did you mean 'train'") != std::string::npos);

  r = cli({"train", "--learning_rat", "0.1"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("did you mean '--learning_rate'") != std::string::npos);

  TempDir dir("cli_codes");
  r = cli({"train", "--data", dir.file("nothing")});
  CHECK(r.code == kExitData);
  CHECK_FALSE(r.err.empty());

  std::ofstream(dir.file("bad.conf")) << "epohcs = 3\n";
  r = cli({"train", "--config", dir.file("bad.conf")});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("did you mean 'epochs'") != std::string::npos);

  r = cli({"gen-data", "--out", dir.file("d"), "--num_seen", "30"});
  CHECK(r.code == kExitData);
}

TEST_CASE("flags override the config file and the echo records the result") {
  TempDir dir("cli_echo");
  std::ofstream(dir.file("gen.conf")) << "train_videos = 3\ntest_videos = 2\nlength = 128\nmax_segment_length = 40\n"
                                         "seed = 4\n";
  auto r = cli({"gen-data", "--config", dir.file("gen.conf"), "--seed", "9", "--out", dir.file("d")});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto echo = read_file(dir.file("d/gen-data.config"));
  CHECK(echo.find("seed = 9\n") != std::string::npos);
  CHECK(echo.find("train_videos = 3\n") != std::string::npos);
  CHECK(echo.find("noise = 0.1\n") != std::string::npos);

  // The echo is itself a valid config file and reproduces the run.
  r = cli({"gen-data", "--config", dir.file("d/gen-data.config"), "--out", dir.file("e")});
  REQUIRE(r.code == kExitOk);
  CHECK(read_file(dir.file("d/train/videos.bin")) == read_file(dir.file("e/train/videos.bin")));
}

TEST_CASE("pipeline reruns are byte-identical") {
  TempDir dir("cli_pipeline");
  auto r = run_pipeline(dir.path().string(), kSmall, {"--config", ZSTAD_CONFIGS "/reference.conf", "--epochs", "2"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const auto first = snapshot(dir.path());
  CHECK(first.count("run/checkpoint.txt") == 1);
  CHECK(first.count("run/trace.csv") == 1);
  CHECK(first.count("run/eval.csv") == 1);
  CHECK(first.at("run/train.config").find("learning_rate = 0.001\n") != std::string::npos);
  CHECK(first.at("run/train.config").find("epochs = 2\n") != std::string::npos);

  r = run_pipeline(dir.path().string(), kSmall, {"--config", ZSTAD_CONFIGS "/reference.conf", "--epochs", "2"});
  REQUIRE(r.code == kExitOk);
  const auto second = snapshot(dir.path());
  REQUIRE(first.size() == second.size());
  for (const auto& [name, body] : first) {
    CAPTURE(name);
    CHECK(second.at(name) == body);
  }

  // A different training seed changes the checkpoint.
  r = cli({"train", "--data", dir.file("data"), "--embeddings", dir.file("data/embeddings_bg.txt"), "--partition",
           dir.file("data/partition.txt"), "--out", dir.file("run2"), "--epochs", "2", "--seed", "1", "--verbosity", "quiet"});
  REQUIRE(r.code == kExitOk);
  CHECK(read_file(dir.file("run2/checkpoint.txt")) != first.at("run/checkpoint.txt"));
}

TEST_CASE("ablate and grad-check commands") {
  TempDir dir("cli_ablate");
  auto r = run_pipeline(dir.path().string(), kSmall, {"--epochs", "0"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  r = cli({"ablate", "--data", dir.file("data"), "--embeddings", dir.file("data/embeddings_bg.txt"), "--partition",
           dir.file("data/partition.txt"), "--seeds", "0,1", "--epochs", "1", "--out", dir.file("abl"), "--verbosity", "quiet"});
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  for (const char* v : {"-TPN*-L_sc", "+TPN*-L_sc", "-TPN*+L_sc", "+TPN*+L_sc"})
    CHECK(r.out.find(v) != std::string::npos);
  CHECK(std::filesystem::exists(dir.file("abl/ablate.config")));

  r = cli({"grad-check", "--configs", "2", "--out", dir.file("gc.txt")});
  CHECK(r.code == kExitOk);
  CHECK(std::filesystem::exists(dir.file("gc.txt")));
}
