#include "cli.h"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <thread>

#include "config_file.h"
#include "graphseq/batching.h"
#include "graphseq/checkpoint.h"
#include "graphseq/datagen.h"
#include "graphseq/errors.h"
#include "graphseq/eval.h"
#include "graphseq/trainer.h"
#include "run_manifest.h"

namespace graphseq::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Common {
  std::string config_path;
  std::string out_dir = ".";
};

// Inputs and outputs named on the command line or in the config resolve
// against --out-dir unless absolute.
std::string resolve(const std::string& out_dir, const std::string& path) {
  const fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(out_dir) / p).lexically_normal().string();
}

ConfigSections read_config(const Common& c) {
  if (c.config_path.empty()) return {};
  return load_config(c.config_path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

// Removes and returns `key` from a config section.
std::optional<std::string> take(std::map<std::string, std::string>& section,
                                const std::string& key) {
  auto it = section.find(key);
  if (it == section.end()) return std::nullopt;
  std::string v = it->second;
  section.erase(it);
  return v;
}

int worker_count(int configured) {
  const unsigned hw = std::thread::hardware_concurrency();
  int n = configured > 0 ? configured : (hw == 0 ? 1 : static_cast<int>(hw));
  if (const char* env = std::getenv("GRAPHSEQ_WORKERS"); env && *env) {
    int cap = 0;
    try {
      std::size_t used = 0;
      cap = std::stoi(env, &used);
      if (used != std::string(env).size()) cap = 0;
    } catch (const std::exception&) {
      cap = 0;
    }
    if (cap < 1) throw ConfigError("GRAPHSEQ_WORKERS must be a positive integer");
    n = std::min(n, cap);
  }
  return n;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool parse_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(what + " must be true or false");
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

struct DatagenArgs {
  Common common;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
};

int cmd_datagen(const DatagenArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  ConfigSections cfg = read_config(a.common);
  auto data_kv = cfg["data"];
  if (a.seed) data_kv["seed"] = std::to_string(*a.seed);
  if (a.task) data_kv["task"] = *a.task;
  const DatasetSpec spec = DatasetSpec::from_kv(data_kv);
  ensure_dir(a.common.out_dir);
  const Dataset data = generate_dataset(spec);
  RunManifest m;
  m.command = "datagen";
  m.config["data"] = spec.to_kv();
  m.seeds["data"] = std::to_string(spec.seed);
  if (!a.common.config_path.empty()) m.inputs.push_back(a.common.config_path);
  m.outputs = write_dataset(a.common.out_dir, spec, data);
  m.duration_seconds = seconds_since(t0);
  m.write(resolve(a.common.out_dir, "manifest_datagen.json"));
  out << dataset_manifest(spec, data);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::optional<std::string> train_file, val_file, mp_mode, loss, gate_enabled;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  ConfigSections cfg = read_config(a.common);
  auto& train_kv = cfg["train"];
  auto& model_kv = cfg["model"];
  const std::string train_file =
      a.train_file ? *a.train_file : take(train_kv, "train_file").value_or("");
  const std::string val_file =
      a.val_file ? *a.val_file : take(train_kv, "val_file").value_or("");
  take(train_kv, "train_file");
  take(train_kv, "val_file");
  if (train_file.empty() || val_file.empty()) {
    throw ConfigError("train needs train_file and val_file");
  }
  LossSpec loss;
  if (auto v = take(train_kv, "loss")) loss.kind = parse_loss_kind(*v);
  if (a.loss) loss.kind = parse_loss_kind(*a.loss);
  std::optional<double> expected_tokens;
  if (auto v = take(train_kv, "expected_token_count")) {
    try {
      expected_tokens = std::stod(*v);
    } catch (const std::exception&) {
      throw ConfigError("train.expected_token_count: not a number");
    }
  }
  if (a.seed) train_kv["seed"] = std::to_string(*a.seed);
  if (a.epochs) train_kv["max_epochs"] = std::to_string(*a.epochs);
  if (a.lr) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *a.lr);
    train_kv["learning_rate"] = buf;
  }
  TrainConfig tc = TrainConfig::from_kv(train_kv);
  tc.workers = worker_count(tc.workers);

  if (!model_kv.count("seed") || a.seed) {
    model_kv["seed"] = std::to_string(tc.seed);
  }
  ModelConfig mc = ModelConfig::from_kv(model_kv);
  if (a.mp_mode) mc = mc.with_mp(parse_mp_mode(*a.mp_mode));
  if (a.gate_enabled) mc.gate_enabled = parse_bool(*a.gate_enabled, "--gate-enabled");
  mc.validate();

  const std::string out_dir = a.common.out_dir;
  const std::string train_path = resolve(out_dir, train_file);
  const std::string val_path = resolve(out_dir, val_file);
  const std::vector<Example> train_set = make_examples(read_records(train_path));
  const std::vector<Example> val_set = make_examples(read_records(val_path));
  if (loss.kind == LossKind::kExpectedTokens) {
    loss.expected_token_count =
        expected_tokens ? *expected_tokens
                        : estimate_expected_tokens(train_set, tc.batch_size, tc.seed);
  }
  loss.validate();
  ensure_dir(out_dir);

  const std::string best_path = resolve(out_dir, "best.ckpt");
  const std::string last_path = resolve(out_dir, "last.ckpt");
  const std::string log_path = resolve(out_dir, "train.log");
  TrainState state;
  if (a.resume) {
    state = TrainState::resume(load_checkpoint(last_path),
                               load_checkpoint(best_path));
    if (state.params.config().to_kv() != mc.to_kv()) {
      throw ConfigError("resume: model config differs from the checkpoint");
    }
  } else {
    state = TrainState::start(ModelParams::initialize(mc));
  }
  std::ofstream log(log_path, a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path);

  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", loss.expected_token_count);
  auto stamp = [&](Checkpoint c) {
    c.meta["loss"] = std::string(loss_kind_name(loss.kind));
    if (loss.kind == LossKind::kExpectedTokens) c.meta["expected_token_count"] = buf;
    return c;
  };
  TrainHooks hooks;
  hooks.log = &log;
  hooks.on_epoch = [&](const TrainState& s) {
    save_checkpoint(best_path, stamp(s.best_checkpoint()));
    save_checkpoint(last_path, stamp(s.last_checkpoint()));
    out << "epoch=" << s.epochs_done - 1 << " val_loss=" << s.val_losses.back()
        << " best_epoch=" << s.best_epoch << std::endl;
  };
  state = train(std::move(state), train_set, val_set, tc, loss, hooks);
  if (state.best_epoch < 0) {
    // Nothing left to run (for example a resume past max_epochs).
    save_checkpoint(best_path, stamp(state.best_checkpoint()));
    save_checkpoint(last_path, stamp(state.last_checkpoint()));
  }
  log.close();

  RunManifest m;
  m.command = "train";
  m.config["model"] = mc.to_kv();
  m.config["train"] = tc.to_kv();
  m.config["train"]["train_file"] = train_path;
  m.config["train"]["val_file"] = val_path;
  m.config["train"]["loss"] = std::string(loss_kind_name(loss.kind));
  if (loss.kind == LossKind::kExpectedTokens) {
    m.config["train"]["expected_token_count"] = buf;
  }
  m.config["train"]["workers"] = std::to_string(tc.workers);
  m.seeds["train"] = std::to_string(tc.seed);
  m.seeds["model"] = std::to_string(mc.seed);
  m.inputs = {train_path, val_path};
  if (!a.common.config_path.empty()) m.inputs.push_back(a.common.config_path);
  m.outputs = {best_path, last_path, log_path};
  m.duration_seconds = seconds_since(t0);
  m.write(resolve(out_dir, "manifest_train.json"));
  out << "best_epoch=" << state.best_epoch
      << " best_val_loss=" << state.best_val_loss << " checkpoint=" << best_path
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::optional<std::string> checkpoint, test_file, baseline_train;
  std::optional<int> repeats, top_k, max_new_tokens;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
  bool greedy = false;
  std::string name = "report";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  ConfigSections cfg = read_config(a.common);
  auto& eval_kv = cfg["eval"];
  const std::string ckpt_file =
      a.checkpoint ? *a.checkpoint : take(eval_kv, "checkpoint").value_or("best.ckpt");
  const std::string test_file =
      a.test_file ? *a.test_file : take(eval_kv, "test_file").value_or("");
  std::optional<std::string> baseline_file = a.baseline_train;
  if (!baseline_file) baseline_file = take(eval_kv, "baseline_train_file");
  take(eval_kv, "checkpoint");
  take(eval_kv, "test_file");
  take(eval_kv, "baseline_train_file");
  if (test_file.empty()) throw ConfigError("eval needs test_file");
  if (a.seed) eval_kv["seed"] = std::to_string(*a.seed);
  if (a.repeats) eval_kv["repeats"] = std::to_string(*a.repeats);
  if (a.top_k) eval_kv["top_k"] = std::to_string(*a.top_k);
  if (a.max_new_tokens) eval_kv["max_new_tokens"] = std::to_string(*a.max_new_tokens);
  if (a.greedy) eval_kv["greedy"] = "true";
  if (a.temperature) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", *a.temperature);
    eval_kv["temperature"] = buf;
  }
  EvalConfig ec = EvalConfig::from_kv(eval_kv);
  ec.workers = worker_count(ec.workers);

  const std::string out_dir = a.common.out_dir;
  const std::string ckpt_path = resolve(out_dir, ckpt_file);
  const std::string test_path = resolve(out_dir, test_file);
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const std::vector<Record> test = read_records(test_path);
  if (test.empty()) throw IoError("empty test set " + test_path);
  const PropertyKind task = FunctionalDescription::parse(test[0].desc).kind;
  for (const Record& r : test) {
    if (FunctionalDescription::parse(r.desc).kind != task) {
      throw ConfigError("test set mixes tasks");
    }
  }
  ensure_dir(out_dir);
  const EvalReport report =
      evaluate(ckpt.params, test, task, ec, sha256_file(ckpt_path).substr(0, 16));

  std::string text = format_report_text(report);
  std::vector<std::string> inputs = {ckpt_path, test_path};
  if (baseline_file) {
    const std::string path = resolve(out_dir, *baseline_file);
    const std::vector<Record> train = read_records(path);
    const Record& modal = modal_record(train);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g",
                  constant_predictor_mae(modal, test, task));
    text += std::string("\nconstant-predictor mae: ") + buf + "\n";
    inputs.push_back(path);
  }
  const std::string text_path = resolve(out_dir, a.name + ".txt");
  const std::string lines_path = resolve(out_dir, a.name + ".metrics");
  const std::string samples_path = resolve(out_dir, a.name + ".samples.tsv");
  write_text(text_path, text);
  write_text(lines_path, format_report_lines(report));
  write_text(samples_path, format_samples(report));

  RunManifest m;
  m.command = "eval";
  m.config["eval"] = ec.to_kv();
  m.config["eval"]["checkpoint"] = ckpt_path;
  m.config["eval"]["test_file"] = test_path;
  m.config["eval"]["workers"] = std::to_string(ec.workers);
  m.config["model"] = ckpt.params.config().to_kv();
  m.seeds["eval"] = std::to_string(ec.seed);
  m.inputs = inputs;
  if (!a.common.config_path.empty()) m.inputs.push_back(a.common.config_path);
  m.outputs = {text_path, lines_path, samples_path};
  m.duration_seconds = seconds_since(t0);
  m.write(resolve(out_dir, "manifest_eval_" + a.name + ".json"));
  out << text;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string out_dir = ".";
  std::string a, b;
  bool welch = false;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  const ParsedReport ra = parse_report_lines(read_text(resolve(a.out_dir, a.a)));
  const ParsedReport rb = parse_report_lines(read_text(resolve(a.out_dir, a.b)));
  out << "task: " << ra.task << (a.welch ? "  (Welch)" : "  (pooled variance)")
      << '\n'
      << format_comparison(compare_reports(ra, rb, a.welch));
  return kExitOk;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "INI config file");
  app->add_option("-o,--out-dir", c.out_dir,
                  "Output directory; relative paths resolve against it");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Graph-conditioned sequence generation toolkit", "graphseq"};
  app.require_subcommand(1);

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "Generate synthetic datasets");
  add_common(datagen, dg.common);
  datagen->add_option("--seed", dg.seed);
  datagen->add_option("--task", dg.task, "valency_electrons | ring_count");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--train-file", tr.train_file);
  train_cmd->add_option("--val-file", tr.val_file);
  train_cmd->add_option("--mp-mode", tr.mp_mode, "none | edges | correspondences");
  train_cmd->add_option("--loss", tr.loss,
                        "per_example | per_token | expected_tokens");
  train_cmd->add_option("--gate-enabled", tr.gate_enabled, "true | false");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_flag("--resume", tr.resume,
                      "Continue from last.ckpt/best.ckpt in --out-dir");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Sample from a checkpoint and score it");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--checkpoint", ev.checkpoint);
  eval_cmd->add_option("--test-file", ev.test_file);
  eval_cmd->add_option("--baseline-train", ev.baseline_train,
                       "Training records for the constant-predictor baseline");
  eval_cmd->add_option("--repeats", ev.repeats);
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--temperature", ev.temperature);
  eval_cmd->add_option("--top-k", ev.top_k);
  eval_cmd->add_option("--max-new-tokens", ev.max_new_tokens);
  eval_cmd->add_flag("--greedy", ev.greedy);
  eval_cmd->add_option("--name", ev.name, "Basename of the report files");

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "t-test two metric reports");
  compare->add_option("report_a", cmp.a)->required();
  compare->add_option("report_b", cmp.b)->required();
  compare->add_option("-o,--out-dir", cmp.out_dir);
  compare->add_flag("--welch", cmp.welch, "Unequal-variance t-test");

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(std::move(rev));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (datagen->parsed()) return cmd_datagen(dg, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    if (compare->parsed()) return cmd_compare(cmp, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace graphseq::cli
