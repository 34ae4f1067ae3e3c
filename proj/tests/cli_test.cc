#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.h"
#include "graphseq/text_graph.h"

namespace graphseq {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr const char* kTinyConfig = R"([data]
task = valency_electrons
train_sizes = 20,40
val_size = 8
test_size = 6
max_nodes = 5
seed = 3

[model]
embed_dim = 16
num_layers = 2
num_heads = 2
ff_dim = 32
max_seq_len = 128
mp_mode = edges

[train]
train_file = train_40.txt
val_file = val.txt
loss = per_example
batch_size = 8
max_epochs = 2
seed = 1
workers = 1

[eval]
test_file = test.txt
repeats = 2
max_new_tokens = 24
workers = 1
)";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("graphseq_cli_" + std::string(::testing::UnitTest::GetInstance()
                                              ->current_test_info()
                                              ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "tiny.ini") << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args, const fs::path& out_dir = {}) {
    const std::string out = (out_dir.empty() ? dir_ : out_dir).string();
    if (args[0] == "compare") {
      args.insert(args.begin() + 1, {"-o", out});
    } else {
      args.insert(args.begin() + 1, {"-c", (dir_ / "tiny.ini").string(), "-o", out});
    }
    args.insert(args.begin(), "graphseq");
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(CliTest, DatagenIsDeterministicAndNested) {
  ASSERT_EQ(run({"datagen"}), 0) << err_.str();
  const fs::path other = dir_ / "again";
  fs::create_directories(other);
  ASSERT_EQ(run({"datagen"}, other), 0) << err_.str();
  for (const char* f : {"train_20.txt", "train_40.txt", "val.txt", "test.txt",
                        "dataset_manifest.txt"}) {
    EXPECT_EQ(slurp(dir_ / f), slurp(other / f)) << f;
  }
  const auto small = read_records((dir_ / "train_20.txt").string());
  const auto large = read_records((dir_ / "train_40.txt").string());
  EXPECT_TRUE(std::equal(small.begin(), small.end(), large.begin()));
  const std::string manifest = slurp(dir_ / "manifest_datagen.json");
  EXPECT_NE(manifest.find("sha256"), std::string::npos);
}

TEST_F(CliTest, InvalidTaskIsConfigError) {
  EXPECT_EQ(run({"datagen", "--task", "qed"}), 2);
  EXPECT_EQ(run({"datagen", "--bogus"}), 2);
  std::ofstream(dir_ / "tiny.ini", std::ios::app) << "\n[extra]\nx = 1\n";
  EXPECT_EQ(run({"datagen"}), 2);
}

TEST_F(CliTest, MissingFilesAreIoErrors) {
  EXPECT_EQ(run({"train"}), 3) << "no dataset yet";
  EXPECT_EQ(run({"eval", "--checkpoint", "missing.ckpt"}), 3);
}

TEST_F(CliTest, TrainEvalCompareRoundTrip) {
  ASSERT_EQ(run({"datagen"}), 0) << err_.str();
  ASSERT_EQ(run({"train"}), 0) << err_.str();
  for (const char* f : {"best.ckpt", "last.ckpt", "train.log", "manifest_train.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / f)) << f;
  }
  const std::string best = slurp(dir_ / "best.ckpt");
  ASSERT_EQ(run({"eval", "--name", "a", "--baseline-train", "train_40.txt"}), 0)
      << err_.str();
  EXPECT_NE(slurp(dir_ / "a.txt").find("constant-predictor mae"), std::string::npos);
  ASSERT_EQ(run({"eval", "--name", "b"}), 0) << err_.str();
  EXPECT_EQ(slurp(dir_ / "a.metrics"), slurp(dir_ / "b.metrics"));
  EXPECT_EQ(slurp(dir_ / "a.samples.tsv"), slurp(dir_ / "b.samples.tsv"));

  ASSERT_EQ(run({"compare", "a.metrics", "b.metrics"}), 0) << err_.str();
  EXPECT_EQ(out_.str().find("yes"), std::string::npos) << out_.str();

  // Retraining from scratch reproduces the checkpoint byte for byte.
  fs::remove(dir_ / "best.ckpt");
  fs::remove(dir_ / "last.ckpt");
  ASSERT_EQ(run({"train"}), 0) << err_.str();
  EXPECT_EQ(slurp(dir_ / "best.ckpt"), best);

  // Resuming a finished run changes nothing.
  ASSERT_EQ(run({"train", "--resume"}), 0) << err_.str();
  EXPECT_EQ(slurp(dir_ / "best.ckpt"), best);
}

TEST_F(CliTest, CompareRejectsMismatchedTasks) {
  std::ofstream(dir_ / "x.metrics")
      << "metric=mae task=valency_electrons mean=1 stderr=0 n=1\n";
  std::ofstream(dir_ / "y.metrics") << "metric=mae task=ring_count mean=1 stderr=0 n=1\n";
  EXPECT_EQ(run({"compare", "x.metrics", "y.metrics"}), 2);
}

TEST_F(CliTest, AblationFlags) {
  ASSERT_EQ(run({"datagen"}), 0) << err_.str();
  EXPECT_EQ(run({"train", "--epochs", "1", "--gate-enabled", "false", "--loss",
                 "expected_tokens"}),
            0)
      << err_.str();
  EXPECT_EQ(run({"train", "--mp-mode", "graph"}), 2);
  EXPECT_EQ(run({"train", "--loss", "mean"}), 2);
}

}  // namespace
}  // namespace graphseq
