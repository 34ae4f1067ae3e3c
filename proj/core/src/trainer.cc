#include "graphseq/trainer.h"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "graphseq/errors.h"

namespace graphseq {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double get_double(const std::map<std::string, std::string>& kv,
                  const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("train." + key + ": not a number: " + it->second);
  }
}

long get_int(const std::map<std::string, std::string>& kv,
             const std::string& key, long fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("train." + key + ": not an integer: " + it->second);
  }
}

int resolve_workers(int workers) {
  if (workers > 0) return workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto run = [&] {
    for (int i = next++; i < n && !failed; i = next++) {
      try {
        fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct ExampleResult {
  double nll = 0.0;
  std::vector<double> grad;
};

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("train.") + name + " must be positive");
    }
  };
  positive(learning_rate, "learning_rate");
  positive(beta1, "beta1");
  positive(beta2, "beta2");
  positive(adam_eps, "adam_eps");
  positive(weight_decay, "weight_decay");
  positive(grad_clip_norm, "grad_clip_norm");
  if (beta1 >= 1.0 || beta2 >= 1.0) throw ConfigError("train.beta must be < 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (patience < 0) throw ConfigError("train.patience must be >= 0");
  if (workers < 0) throw ConfigError("train.workers must be >= 0");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  return {
      {"learning_rate", fmt_double(learning_rate)},
      {"beta1", fmt_double(beta1)},
      {"beta2", fmt_double(beta2)},
      {"adam_eps", fmt_double(adam_eps)},
      {"weight_decay", fmt_double(weight_decay)},
      {"grad_clip_norm", fmt_double(grad_clip_norm)},
      {"batch_size", std::to_string(batch_size)},
      {"max_epochs", std::to_string(max_epochs)},
      {"patience", std::to_string(patience)},
      {"seed", std::to_string(seed)},
  };
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  static const char* known[] = {
      "learning_rate", "beta1",      "beta2",    "adam_eps", "weight_decay",
      "grad_clip_norm", "batch_size", "max_epochs", "patience", "seed",
      "workers"};
  for (const auto& [k, v] : kv) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError("unknown train key: " + k);
  }
  TrainConfig c;
  c.learning_rate = get_double(kv, "learning_rate", c.learning_rate);
  c.beta1 = get_double(kv, "beta1", c.beta1);
  c.beta2 = get_double(kv, "beta2", c.beta2);
  c.adam_eps = get_double(kv, "adam_eps", c.adam_eps);
  c.weight_decay = get_double(kv, "weight_decay", c.weight_decay);
  c.grad_clip_norm = get_double(kv, "grad_clip_norm", c.grad_clip_norm);
  c.batch_size = static_cast<int>(get_int(kv, "batch_size", c.batch_size));
  c.max_epochs = static_cast<int>(get_int(kv, "max_epochs", c.max_epochs));
  c.patience = static_cast<int>(get_int(kv, "patience", c.patience));
  c.seed = static_cast<std::uint64_t>(get_int(kv, "seed", 0));
  c.workers = static_cast<int>(get_int(kv, "workers", 0));
  c.validate();
  return c;
}

double linear_lr(double base_lr, long step, long total_steps) {
  if (total_steps <= 0) return 0.0;
  const double frac = 1.0 - static_cast<double>(step) / total_steps;
  return base_lr * std::max(0.0, frac);
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

void adam_step(std::span<double> params, std::span<const double> grad,
               OptimizerState& st, double lr, const TrainConfig& c) {
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] + c.weight_decay * params[i];
    st.m[i] = c.beta1 * st.m[i] + (1.0 - c.beta1) * g;
    st.v[i] = c.beta2 * st.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + c.adam_eps);
  }
}

double estimate_expected_tokens(const std::vector<Example>& dataset,
                                int batch_size, std::uint64_t seed) {
  if (dataset.empty()) throw Error("expected token count of empty dataset");
  const auto batches = make_batches(dataset, batch_size, seed, 0);
  double sum = 0.0;
  for (const Batch& b : batches) sum += static_cast<double>(b.total_targets());
  return sum / static_cast<double>(batches.size());
}

BatchResult batch_loss(const ModelParams& params,
                       const std::vector<Example>& dataset,
                       const std::vector<int>& indices, const LossSpec& spec,
                       bool with_grad, int workers) {
  if (indices.empty()) throw Error("batch_loss: empty batch");
  spec.validate();
  const int n = static_cast<int>(indices.size());
  const MpMode mode = params.config().mp_mode;
  std::vector<ExampleResult> results(n);
  parallel_for(n, workers, [&](int i) {
    const Example& ex = dataset.at(indices[i]);
    const GraphStructure s = derive_structure(ex.tokens, ex.graph_start, mode);
    ForwardCache cache;
    const Matrix logits = forward(params, ex.tokens, s,
                                  with_grad ? &cache : nullptr,
                                  ex.graph_start - 1);
    Matrix dlogits;
    const std::vector<int> targets = ex.targets();
    results[i].nll = token_nll(logits, targets, with_grad ? &dlogits : nullptr);
    if (with_grad) {
      results[i].grad.assign(params.size(), 0.0);
      backward(params, cache, dlogits, results[i].grad);
    }
  });
  BatchResult out;
  for (int i = 0; i < n; ++i) {
    out.nll_sum += results[i].nll;
    out.tokens += dataset[indices[i]].target_count();
  }
  const double denom = loss_denominator(spec, n, out.tokens);
  out.loss = out.nll_sum / denom;
  if (with_grad) {
    out.grad.assign(params.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      const auto& g = results[i].grad;
      for (std::size_t k = 0; k < g.size(); ++k) out.grad[k] += g[k];
    }
    for (double& g : out.grad) g /= denom;
  }
  return out;
}

double validation_loss(const ModelParams& params,
                       const std::vector<Example>& dataset, int workers) {
  if (dataset.empty()) throw Error("validation_loss: empty dataset");
  std::vector<int> all(dataset.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return batch_loss(params, dataset, all, LossSpec{}, false, workers).loss;
}

TrainState TrainState::start(const ModelParams& init) {
  TrainState s;
  s.params = init;
  s.best_params = init;
  s.optimizer.m.assign(init.size(), 0.0);
  s.optimizer.v.assign(init.size(), 0.0);
  return s;
}

Checkpoint TrainState::best_checkpoint() const {
  Checkpoint c{best_params, std::nullopt, {}};
  c.meta["epoch"] = std::to_string(best_epoch);
  c.meta["val_loss"] = fmt_double(best_val_loss);
  return c;
}

Checkpoint TrainState::last_checkpoint() const {
  Checkpoint c{params, optimizer, {}};
  c.meta["epochs_done"] = std::to_string(epochs_done);
  c.meta["best_epoch"] = std::to_string(best_epoch);
  c.meta["best_val_loss"] = fmt_double(best_val_loss);
  std::string hist;
  for (double v : val_losses) {
    if (!hist.empty()) hist += ',';
    hist += fmt_double(v);
  }
  c.meta["val_losses"] = hist;
  return c;
}

TrainState TrainState::resume(const Checkpoint& last, const Checkpoint& best) {
  if (!last.optimizer) throw IoError("resume checkpoint has no optimizer state");
  auto meta = [&](const char* key) -> const std::string& {
    auto it = last.meta.find(key);
    if (it == last.meta.end()) {
      throw IoError(std::string("resume checkpoint lacks ") + key);
    }
    return it->second;
  };
  TrainState s;
  s.params = last.params;
  s.optimizer = *last.optimizer;
  s.epochs_done = std::stoi(meta("epochs_done"));
  s.best_epoch = std::stoi(meta("best_epoch"));
  s.best_val_loss = std::stod(meta("best_val_loss"));
  s.best_params = best.params;
  const std::string& hist = meta("val_losses");
  for (std::size_t pos = 0; pos < hist.size();) {
    std::size_t comma = hist.find(',', pos);
    if (comma == std::string::npos) comma = hist.size();
    s.val_losses.push_back(std::stod(hist.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return s;
}

TrainState train(TrainState state, const std::vector<Example>& train_set,
                 const std::vector<Example>& val_set, const TrainConfig& config,
                 const LossSpec& spec, const TrainHooks& hooks) {
  config.validate();
  spec.validate();
  if (train_set.empty() || val_set.empty()) {
    throw Error("train: training and validation sets must be non-empty");
  }
  const long per_epoch =
      (static_cast<long>(train_set.size()) + config.batch_size - 1) /
      config.batch_size;
  const long total_steps = per_epoch * config.max_epochs;
  int run_epochs = 0;
  while (state.epochs_done < config.max_epochs) {
    if (hooks.epoch_limit >= 0 && run_epochs >= hooks.epoch_limit) break;
    if (config.patience > 0 && state.best_epoch >= 0 &&
        state.epochs_done - 1 - state.best_epoch >= config.patience) {
      break;
    }
    const int epoch = state.epochs_done;
    const auto batches =
        make_batches(train_set, config.batch_size, config.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const long step = state.optimizer.step;
      BatchResult r = batch_loss(state.params, train_set, batches[b].indices,
                                 spec, true, config.workers);
      if (!std::isfinite(r.loss)) {
        throw DivergenceError("non-finite training loss at step " +
                              std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + ")");
      }
      const double norm = clip_grad_norm(r.grad, config.grad_clip_norm);
      if (!std::isfinite(norm)) {
        throw DivergenceError("non-finite gradient norm at step " +
                              std::to_string(step));
      }
      const double lr = linear_lr(config.learning_rate, step, total_steps);
      adam_step(state.params.data(), r.grad, state.optimizer, lr, config);
      if (hooks.log) {
        *hooks.log << "step=" << step << " epoch=" << epoch
                   << " lr=" << fmt_short(lr) << " loss=" << fmt_short(r.loss)
                   << " grad_norm=" << fmt_short(norm) << '\n';
      }
    }
    const double val = validation_loss(state.params, val_set, config.workers);
    if (!std::isfinite(val)) {
      throw DivergenceError("non-finite validation loss after epoch " +
                            std::to_string(epoch));
    }
    state.val_losses.push_back(val);
    if (val < state.best_val_loss) {
      state.best_val_loss = val;
      state.best_epoch = epoch;
      state.best_params = state.params;
    }
    ++state.epochs_done;
    ++run_epochs;
    if (hooks.log) {
      *hooks.log << "epoch=" << epoch << " val_loss=" << fmt_short(val)
                 << " best_epoch=" << state.best_epoch << '\n';
      hooks.log->flush();
    }
    if (hooks.on_epoch) hooks.on_epoch(state);
  }
  return state;
}

}  // namespace graphseq
