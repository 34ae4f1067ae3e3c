#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "graphseq/batching.h"
#include "graphseq/checkpoint.h"
#include "graphseq/datagen.h"
#include "graphseq/errors.h"
#include "graphseq/loss.h"
#include "graphseq/trainer.h"
#include "model_support.h"

namespace graphseq {
namespace {

// Logits with probability exactly 1/2 on the target (one rival at the same
// score, everything else at -1000).
Matrix half_probability_logits(const std::vector<int>& targets) {
  Matrix m = Matrix::Constant(targets.size(), kVocabSize, -1000.0);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    m(r, targets[r]) = 0.0;
    m(r, (targets[r] + 1) % kVocabSize) = 0.0;
  }
  return m;
}

TEST(Loss, HandArithmetic) {
  const std::vector<std::vector<int>> targets = {{10, 11}, {12, 13, 14, 15}};
  const std::vector<Matrix> logits = {half_probability_logits(targets[0]),
                                      half_probability_logits(targets[1])};
  const double ln2 = std::log(2.0);
  EXPECT_NEAR(compute_loss(logits, targets, {LossKind::kPerExample}), 3 * ln2, 1e-15);
  EXPECT_NEAR(compute_loss(logits, targets, {LossKind::kPerToken}), ln2, 1e-15);
  EXPECT_NEAR(compute_loss(logits, targets, {LossKind::kExpectedTokens, 3.0}),
              2 * ln2, 1e-15);
}

TEST(Loss, PerfectPredictionIsZero) {
  const std::vector<std::vector<int>> targets = {{10, kIgnoreTarget}, {20}};
  std::vector<Matrix> logits;
  for (const auto& t : targets) {
    Matrix m = Matrix::Constant(t.size(), kVocabSize, -1e4);
    for (std::size_t r = 0; r < t.size(); ++r) {
      if (t[r] >= 0) m(r, t[r]) = 0.0;
    }
    logits.push_back(m);
  }
  for (LossSpec s : {LossSpec{LossKind::kPerExample}, LossSpec{LossKind::kPerToken},
                     LossSpec{LossKind::kExpectedTokens, 7.5}}) {
    EXPECT_EQ(compute_loss(logits, targets, s), 0.0);
  }
}

TEST(Loss, EqualLengthIdentity) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + rng.uniform_int(6);
    const int L = 1 + rng.uniform_int(30);
    std::vector<Matrix> logits;
    std::vector<std::vector<int>> targets;
    for (int i = 0; i < n; ++i) {
      logits.push_back(Matrix::Random(L, kVocabSize) * 3.0);
      std::vector<int> t(L);
      for (int& y : t) y = rng.uniform_int(kVocabSize);
      targets.push_back(t);
    }
    const double ex = compute_loss(logits, targets, {LossKind::kPerExample});
    const double tok = compute_loss(logits, targets, {LossKind::kPerToken});
    EXPECT_DOUBLE_EQ(ex, L * tok);
  }
}

TEST(Loss, GradientMatchesDifferences) {
  const std::vector<std::vector<int>> targets = {{3, 5, kIgnoreTarget}, {7}};
  std::vector<Matrix> logits = {Matrix::Random(3, kVocabSize),
                                Matrix::Random(1, kVocabSize)};
  const LossSpec spec{LossKind::kPerToken};
  std::vector<Matrix> d;
  compute_loss(logits, targets, spec, &d);
  for (auto [i, r, c] : {std::tuple{0, 0, 3}, {0, 1, 9}, {1, 0, 7}, {0, 2, 4}}) {
    const double saved = logits[i](r, c);
    logits[i](r, c) = saved + 1e-6;
    const double up = compute_loss(logits, targets, spec);
    logits[i](r, c) = saved - 1e-6;
    const double down = compute_loss(logits, targets, spec);
    logits[i](r, c) = saved;
    EXPECT_NEAR(d[i](r, c), (up - down) / 2e-6, 1e-8);
  }
}

TEST(Loss, Errors) {
  EXPECT_THROW(compute_loss({}, {}, {}), Error);
  const std::vector<Matrix> logits = {Matrix::Zero(1, kVocabSize)};
  const std::vector<std::vector<int>> none = {{kIgnoreTarget}};
  EXPECT_THROW(compute_loss(logits, none, {}), Error);
  EXPECT_THROW((LossSpec{LossKind::kExpectedTokens, 0.0}.validate()), ConfigError);
  EXPECT_THROW(parse_loss_kind("per_sequence"), ConfigError);
  EXPECT_EQ(parse_loss_kind("expected_tokens"), LossKind::kExpectedTokens);
}

Example example_of_length(int length, int graph_start) {
  Example e;
  e.tokens.assign(length, 20);
  e.tokens[0] = tok::kBOS;
  e.tokens[graph_start - 1] = tok::kSEP;
  e.graph_start = graph_start;
  return e;
}

TEST(Batching, PadsToLongestAndKeepsTrueLengths) {
  const std::vector<Example> ds = {example_of_length(3, 2), example_of_length(7, 3)};
  const auto batches = make_batches(ds, 2, 0, 0);
  ASSERT_EQ(batches.size(), 1u);
  const Batch& b = batches[0];
  EXPECT_EQ(b.width, 7);
  EXPECT_EQ(b.tokens.size(), 14u);
  for (int i = 0; i < 2; ++i) {
    const Example& e = ds[b.indices[i]];
    EXPECT_EQ(b.lengths[i], e.length());
    EXPECT_EQ(b.target_counts[i], e.target_count());
    for (int t = e.length(); t < 7; ++t) EXPECT_EQ(b.tokens[i * 7 + t], tok::kPAD);
  }
  EXPECT_EQ(b.total_targets(), 1 + 4);
}

TEST(Batching, DeterministicPermutation) {
  std::vector<Example> ds;
  for (int i = 0; i < 23; ++i) ds.push_back(example_of_length(4 + i % 5, 2));
  const auto a = make_batches(ds, 5, 11, 3);
  const auto b = make_batches(ds, 5, 11, 3);
  const auto c = make_batches(ds, 5, 11, 4);
  std::vector<int> ia, ic;
  for (const auto& x : a) ia.insert(ia.end(), x.indices.begin(), x.indices.end());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].indices, b[i].indices);
  for (const auto& x : c) ic.insert(ic.end(), x.indices.begin(), x.indices.end());
  EXPECT_NE(ia, ic);
  EXPECT_EQ(a.size(), 5u);
  EXPECT_EQ(a.back().size(), 3);
  std::sort(ia.begin(), ia.end());
  std::vector<int> all(23);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(ia, all);
}

TEST(Batching, ExampleTargetsFollowGraphRegion) {
  Record r{FunctionalDescription{PropertyKind::kValencyElectrons, 10}.text(),
           "<PN>C<E>-<SN>O"};
  const Example e = make_example(r);
  const auto t = e.targets();
  ASSERT_EQ(static_cast<int>(t.size()), e.target_count() + 1);
  EXPECT_EQ(t.front(), tok::kPN);
  EXPECT_EQ(t[t.size() - 2], tok::kEOS);
  EXPECT_EQ(t.back(), kIgnoreTarget);
}

class TrainingFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    DatasetSpec spec;
    spec.train_sizes = {32};
    spec.val_size = 8;
    spec.test_size = 1;
    spec.max_nodes = 5;
    spec.seed = 5;
    const Dataset d = generate_dataset(spec);
    train_ = new std::vector<Example>(make_examples(d.train.at(32)));
    val_ = new std::vector<Example>(make_examples(d.val));
  }
  static void TearDownTestSuite() {
    delete train_;
    delete val_;
  }
  static ModelParams small_model(MpMode mode = MpMode::kEdges) {
    ModelConfig c;
    c.embed_dim = 16;
    c.num_heads = 2;
    c.ff_dim = 32;
    c.max_seq_len = 160;
    c.seed = 1;
    return ModelParams::initialize(c.with_mp(mode));
  }
  static std::vector<Example>* train_;
  static std::vector<Example>* val_;
};
std::vector<Example>* TrainingFixture::train_ = nullptr;
std::vector<Example>* TrainingFixture::val_ = nullptr;

TEST_F(TrainingFixture, PerExampleEpochTotalIgnoresBatching) {
  const ModelParams p = small_model();
  std::vector<double> example_totals, token_means;
  for (int batch_size : {4, 8}) {
    for (std::uint64_t seed : {1u, 2u}) {
      double total = 0.0, token_sum = 0.0;
      const auto batches = make_batches(*train_, batch_size, seed, 0);
      for (const Batch& b : batches) {
        const auto ex = batch_loss(p, *train_, b.indices, {LossKind::kPerExample}, false);
        const auto tk = batch_loss(p, *train_, b.indices, {LossKind::kPerToken}, false);
        total += ex.loss * b.size();
        token_sum += tk.loss;
      }
      example_totals.push_back(total);
      token_means.push_back(token_sum / batches.size());
    }
  }
  for (double t : example_totals) EXPECT_NEAR(t, example_totals[0], 1e-9 * t);
  const auto [lo, hi] = std::minmax_element(token_means.begin(), token_means.end());
  EXPECT_GT(*hi - *lo, 1e-6);
}

TEST_F(TrainingFixture, LearningRateSchedule) {
  EXPECT_EQ(linear_lr(1e-3, 0, 100), 1e-3);
  EXPECT_EQ(linear_lr(1e-3, 50, 100), 5e-4);
  EXPECT_EQ(linear_lr(1e-3, 100, 100), 0.0);
  EXPECT_EQ(linear_lr(1e-3, 150, 100), 0.0);
}

TEST_F(TrainingFixture, ClipScalesGradient) {
  std::vector<double> g = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(g[0], 0.6);
  EXPECT_DOUBLE_EQ(g[1], 0.8);
  std::vector<double> small = {0.3, 0.4};
  clip_grad_norm(small, 1.0);
  EXPECT_EQ(small, (std::vector<double>{0.3, 0.4}));
}

TEST_F(TrainingFixture, AdamFirstStepMovesByLearningRate) {
  std::vector<double> p = {1.0, -2.0};
  const std::vector<double> g = {0.5, -3.0};
  OptimizerState s{{0, 0}, {0, 0}, 0};
  TrainConfig c;
  c.weight_decay = 0.0;
  adam_step(p, g, s, 0.1, c);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -1.9, 1e-6);
  EXPECT_EQ(s.step, 1);
}

TEST_F(TrainingFixture, SmokeRunLossDecreases) {
  ModelParams p = small_model();
  TrainConfig c;
  c.learning_rate = 1e-3;
  std::vector<int> all(train_->size());
  std::iota(all.begin(), all.end(), 0);
  OptimizerState opt{std::vector<double>(p.size()), std::vector<double>(p.size()), 0};
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    BatchResult r = batch_loss(p, *train_, all, {LossKind::kPerExample}, true);
    losses.push_back(r.loss);
    clip_grad_norm(r.grad, c.grad_clip_norm);
    adam_step(p.data(), r.grad, opt, linear_lr(c.learning_rate, step, 50), c);
  }
  for (int i = 1; i < 10; ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
  EXPECT_LT(losses.back(), losses[9]);
}

TEST_F(TrainingFixture, WorkerCountDoesNotChangeGradient) {
  const ModelParams p = small_model(MpMode::kCorrespondences);
  std::vector<int> idx = {0, 3, 5, 7, 9, 11, 13};
  const auto a = batch_loss(p, *train_, idx, {LossKind::kPerToken}, true, 1);
  const auto b = batch_loss(p, *train_, idx, {LossKind::kPerToken}, true, 3);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
  EXPECT_EQ(validation_loss(p, *val_, 1), validation_loss(p, *val_, 4));
}

TEST_F(TrainingFixture, ResumeIsBitIdentical) {
  TrainConfig c;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.learning_rate = 1e-3;
  c.seed = 4;
  c.workers = 1;
  const LossSpec spec{LossKind::kPerExample};
  const TrainState init = TrainState::start(small_model());
  const TrainState full = train(init, *train_, *val_, c, spec);

  TrainHooks hooks;
  hooks.epoch_limit = 1;
  const TrainState part = train(init, *train_, *val_, c, spec, hooks);
  const Checkpoint last = decode_checkpoint(encode_checkpoint(part.last_checkpoint()));
  const Checkpoint best = decode_checkpoint(encode_checkpoint(part.best_checkpoint()));
  const TrainState resumed =
      train(TrainState::resume(last, best), *train_, *val_, c, spec);

  EXPECT_TRUE(resumed.params == full.params);
  EXPECT_TRUE(resumed.best_params == full.best_params);
  EXPECT_EQ(resumed.val_losses, full.val_losses);
  EXPECT_EQ(resumed.best_epoch, full.best_epoch);
  EXPECT_EQ(resumed.optimizer, full.optimizer);
  EXPECT_EQ(full.epochs_done, 3);
}

TEST_F(TrainingFixture, BestCheckpointTracksValidationMinimum) {
  TrainConfig c;
  c.batch_size = 16;
  c.max_epochs = 2;
  c.seed = 1;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.log = &log;
  int calls = 0;
  hooks.on_epoch = [&](const TrainState&) { ++calls; };
  const TrainState s =
      train(TrainState::start(small_model()), *train_, *val_, c, {}, hooks);
  EXPECT_EQ(calls, 2);
  ASSERT_EQ(s.val_losses.size(), 2u);
  const auto best = std::min_element(s.val_losses.begin(), s.val_losses.end());
  EXPECT_EQ(s.best_epoch, best - s.val_losses.begin());
  EXPECT_EQ(s.best_val_loss, *best);
  EXPECT_EQ(validation_loss(s.best_params, *val_), *best);
  EXPECT_NE(log.str().find("step=3 epoch=1 lr="), std::string::npos);
  EXPECT_NE(log.str().find("epoch=1 val_loss="), std::string::npos);
}

TEST_F(TrainingFixture, NonFiniteLossRaisesDivergence) {
  ModelParams p = small_model();
  p.data()[p.tensor("lm_head").offset] = std::nan("");
  TrainConfig c;
  c.max_epochs = 1;
  EXPECT_THROW(train(TrainState::start(p), *train_, *val_, c, {}), DivergenceError);
}

TEST_F(TrainingFixture, ExpectedTokenEstimate) {
  const double est = estimate_expected_tokens(*train_, 8, 0);
  long total = 0;
  for (const Example& e : *train_) total += e.target_count();
  EXPECT_NEAR(est, total / 4.0, 1e-9);
}

TEST(TrainConfig, KeyValues) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.patience = 3;
  const TrainConfig back = TrainConfig::from_kv(c.to_kv());
  EXPECT_EQ(back.to_kv(), c.to_kv());
  EXPECT_THROW(TrainConfig::from_kv({{"lr", "1"}}), ConfigError);
  EXPECT_THROW(TrainConfig::from_kv({{"batch_size", "0"}}), ConfigError);
}

}  // namespace
}  // namespace graphseq
