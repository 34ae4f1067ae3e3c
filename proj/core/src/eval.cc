#include "graphseq/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include "graphseq/codec.h"
#include "graphseq/datagen.h"
#include "graphseq/errors.h"
#include "graphseq/random.h"
#include "graphseq/stats.h"
#include "graphseq/vocab.h"

namespace graphseq {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_exact(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::optional<TextGraph> parse_tokens(std::span<const int> tokens) {
  try {
    return deserialize_tokens(tokens);
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

std::optional<TextGraph> parse_text(std::string_view text) {
  try {
    return deserialize(text);
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

std::optional<double> oracle(const TextGraph& g, PropertyKind task) {
  try {
    return property_value(g, task);
  } catch (const UnknownElementError&) {
    return std::nullopt;
  }
}

template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    workers = hw == 0 ? 1 : static_cast<int>(hw);
  }
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
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

double parse_value(const std::string& s) {
  if (s == "nan") return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("report: bad number " + s);
  }
}

}  // namespace

std::optional<double> score_graph(std::string_view generated,
                                  PropertyKind task) {
  const auto g = parse_text(generated);
  if (!g) return std::nullopt;
  return oracle(*g, task);
}

std::optional<double> score_tokens(std::span<const int> generated,
                                   PropertyKind task) {
  const auto g = parse_tokens(generated);
  if (!g) return std::nullopt;
  return oracle(*g, task);
}

int parsability_score(std::string_view generated, PropertyKind task) {
  return score_graph(generated, task).has_value() ? 1 : 0;
}

double mae(std::span<const std::pair<double, std::string>> samples,
           PropertyKind task) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [target, text] : samples) {
    const auto v = score_graph(text, task);
    if (!v) continue;
    sum += std::fabs(*v - target);
    ++n;
  }
  if (n == 0) throw NoParsableSamplesError("no parsable samples for MAE");
  return sum / n;
}

int diversity_score(std::string_view sample1, std::string_view sample2,
                    const TextGraph& ground_truth) {
  const auto a = parse_text(sample1);
  const auto b = parse_text(sample2);
  if (!a || !b) return 0;
  return !graph_equal(*a, *b) && !graph_equal(*a, ground_truth) &&
                 !graph_equal(*b, ground_truth)
             ? 1
             : 0;
}

void EvalConfig::validate() const {
  if (repeats < 1) throw ConfigError("eval.repeats must be >= 1");
  if (max_new_tokens < 1) throw ConfigError("eval.max_new_tokens must be >= 1");
  if (!policy.greedy && !(policy.temperature > 0.0)) {
    throw ConfigError("eval.temperature must be positive");
  }
  if (policy.top_k < 0) throw ConfigError("eval.top_k must be >= 0");
  if (workers < 0) throw ConfigError("eval.workers must be >= 0");
}

std::map<std::string, std::string> EvalConfig::to_kv() const {
  return {{"repeats", std::to_string(repeats)},
          {"seed", std::to_string(seed)},
          {"greedy", policy.greedy ? "true" : "false"},
          {"temperature", fmt_exact(policy.temperature)},
          {"top_k", std::to_string(policy.top_k)},
          {"max_new_tokens", std::to_string(max_new_tokens)}};
}

EvalConfig EvalConfig::from_kv(const std::map<std::string, std::string>& kv) {
  EvalConfig c;
  for (const auto& [k, v] : kv) {
    try {
      if (k == "repeats") {
        c.repeats = std::stoi(v);
      } else if (k == "seed") {
        c.seed = std::stoull(v);
      } else if (k == "greedy") {
        if (v != "true" && v != "false") throw std::invalid_argument(v);
        c.policy.greedy = v == "true";
      } else if (k == "temperature") {
        c.policy.temperature = std::stod(v);
      } else if (k == "top_k") {
        c.policy.top_k = std::stoi(v);
      } else if (k == "max_new_tokens") {
        c.max_new_tokens = std::stoi(v);
      } else if (k == "workers") {
        c.workers = std::stoi(v);
      } else {
        throw ConfigError("unknown eval key: " + k);
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("eval." + k + ": bad value " + v);
    }
  }
  c.validate();
  return c;
}

const MetricSummary& EvalReport::metric(std::string_view name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return m;
  }
  throw Error("report has no metric " + std::string(name));
}

MetricSummary summarize(std::string name, std::vector<double> runs) {
  MetricSummary s;
  s.name = std::move(name);
  std::vector<double> defined;
  for (double v : runs) {
    if (!std::isnan(v)) defined.push_back(v);
  }
  s.runs = std::move(runs);
  s.n = static_cast<int>(defined.size());
  s.mean = defined.empty() ? kNaN : mean(defined);
  s.std_error = standard_error(defined);
  return s;
}

EvalReport evaluate(const ModelParams& params, const std::vector<Record>& test,
                    PropertyKind task, const EvalConfig& config,
                    std::string checkpoint_id) {
  config.validate();
  if (test.empty()) throw Error("evaluate: empty test set");
  const int n = static_cast<int>(test.size());
  std::vector<std::vector<int>> prompts(n);
  std::vector<double> targets(n);
  std::vector<TextGraph> truths(n);
  for (int i = 0; i < n; ++i) {
    prompts[i] = make_prompt(test[i].desc);
    targets[i] = FunctionalDescription::parse(test[i].desc).target;
    truths[i] = deserialize(test[i].graph);
  }
  const int max_len = params.config().max_seq_len;

  EvalReport report;
  report.task = task;
  report.checkpoint_id = std::move(checkpoint_id);
  report.seed = config.seed;
  report.repeats = config.repeats;
  report.samples.resize(static_cast<std::size_t>(n) * config.repeats);
  std::vector<double> par_runs, mae_runs, div_runs;
  for (int r = 0; r < config.repeats; ++r) {
    parallel_for(n, config.workers, [&](int i) {
      const int budget = std::min(
          config.max_new_tokens, max_len - static_cast<int>(prompts[i].size()));
      SampleRecord& rec = report.samples[static_cast<std::size_t>(r) * n + i];
      rec.repeat = r;
      rec.index = i;
      rec.target = targets[i];
      std::optional<TextGraph> graphs[2];
      for (int s = 0; s < 2; ++s) {
        const std::uint64_t seed =
            mix_seed({config.seed, static_cast<std::uint64_t>(r),
                      static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(s)});
        const SampleOutput out =
            sample(params, prompts[i], config.policy, budget, seed);
        (s == 0 ? rec.sample1 : rec.sample2) = decode(out.generated);
        // A sample cut off before <EOS> is incomplete and never scored.
        if (out.hit_eos) graphs[s] = parse_tokens(out.generated);
      }
      if (graphs[0]) rec.value = oracle(*graphs[0], task);
      rec.parsable = rec.value.has_value() ? 1 : 0;
      if (graphs[0] && graphs[1]) {
        rec.diverse = !graph_equal(*graphs[0], *graphs[1]) &&
                      !graph_equal(*graphs[0], truths[i]) &&
                      !graph_equal(*graphs[1], truths[i]);
      }
    });
    double parsable = 0, diverse = 0, abs_err = 0;
    for (int i = 0; i < n; ++i) {
      const SampleRecord& rec = report.samples[static_cast<std::size_t>(r) * n + i];
      parsable += rec.parsable;
      diverse += rec.diverse;
      if (rec.value) abs_err += std::fabs(*rec.value - rec.target);
    }
    par_runs.push_back(parsable / n);
    mae_runs.push_back(parsable > 0 ? abs_err / parsable : kNaN);
    div_runs.push_back(diverse / n);
  }
  report.metrics.push_back(summarize("parsability", par_runs));
  report.metrics.push_back(summarize("mae", mae_runs));
  report.metrics.push_back(summarize("diversity", div_runs));
  return report;
}

std::string format_report_text(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  out << "task: " << property_kind_name(report.task) << '\n';
  if (!report.checkpoint_id.empty()) {
    out << "checkpoint: " << report.checkpoint_id << '\n';
  }
  out << "seed: " << report.seed << "  repeats: " << report.repeats
      << "  prompts: "
      << (report.repeats ? report.samples.size() / report.repeats : 0) << "\n\n";
  std::snprintf(line, sizeof line, "%-12s %12s %12s %4s\n", "metric", "mean",
                "stderr", "n");
  out << line;
  for (const auto& m : report.metrics) {
    std::snprintf(line, sizeof line, "%-12s %12s %12s %4d\n", m.name.c_str(),
                  fmt(m.mean).c_str(), fmt(m.std_error).c_str(), m.n);
    out << line;
  }
  return out.str();
}

std::string format_report_lines(const EvalReport& report) {
  std::ostringstream out;
  const std::string task(property_kind_name(report.task));
  for (const auto& m : report.metrics) {
    out << "metric=" << m.name << " task=" << task
        << " mean=" << fmt_exact(m.mean) << " stderr=" << fmt_exact(m.std_error)
        << " n=" << m.n << '\n';
  }
  for (const auto& m : report.metrics) {
    for (std::size_t r = 0; r < m.runs.size(); ++r) {
      out << "metric=" << m.name << " task=" << task << " run=" << r
          << " value=" << fmt_exact(m.runs[r]) << '\n';
    }
  }
  return out.str();
}

std::string format_samples(const EvalReport& report) {
  std::ostringstream out;
  out << "repeat\tindex\ttarget\tvalue\tparsable\tdiverse\tsample1\tsample2\n";
  for (const auto& s : report.samples) {
    out << s.repeat << '\t' << s.index << '\t' << fmt_exact(s.target) << '\t'
        << (s.value ? fmt_exact(*s.value) : "-") << '\t' << s.parsable << '\t'
        << s.diverse << '\t' << s.sample1 << '\t' << s.sample2 << '\n';
  }
  return out.str();
}

ParsedReport parse_report_lines(std::string_view text) {
  ParsedReport out;
  std::map<std::string, std::map<int, double>> runs;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::map<std::string, std::string> kv;
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw IoError("report: bad field " + field);
      kv[field.substr(0, eq)] = field.substr(eq + 1);
    }
    if (!kv.count("metric") || !kv.count("task")) {
      throw IoError("report: line lacks metric/task: " + line);
    }
    if (out.task.empty()) {
      out.task = kv["task"];
    } else if (out.task != kv["task"]) {
      throw IoError("report: mixed tasks");
    }
    const std::string name = kv["metric"];
    if (kv.count("run")) {
      if (!kv.count("value")) throw IoError("report: run line lacks value");
      runs[name][std::stoi(kv["run"])] = parse_value(kv["value"]);
    } else {
      MetricSummary& m = out.metrics[name];
      m.name = name;
      m.mean = parse_value(kv.at("mean"));
      m.std_error = parse_value(kv.at("stderr"));
      m.n = std::stoi(kv.at("n"));
    }
  }
  for (auto& [name, by_run] : runs) {
    MetricSummary& m = out.metrics[name];
    m.name = name;
    for (const auto& [r, v] : by_run) m.runs.push_back(v);
  }
  if (out.metrics.empty()) throw IoError("report: no metric lines");
  return out;
}

std::vector<Comparison> compare_reports(const ParsedReport& a,
                                        const ParsedReport& b, bool welch) {
  if (a.task != b.task) {
    throw ConfigError("cannot compare reports for tasks " + a.task + " and " +
                      b.task);
  }
  std::vector<Comparison> rows;
  for (const auto& [name, ma] : a.metrics) {
    auto it = b.metrics.find(name);
    if (it == b.metrics.end()) continue;
    std::vector<double> ra, rb;
    for (double v : ma.runs) {
      if (!std::isnan(v)) ra.push_back(v);
    }
    for (double v : it->second.runs) {
      if (!std::isnan(v)) rb.push_back(v);
    }
    Comparison c;
    c.metric = name;
    c.mean_a = ra.empty() ? kNaN : mean(ra);
    c.mean_b = rb.empty() ? kNaN : mean(rb);
    if (ra.size() >= 2 && rb.size() >= 2) {
      const TTestResult t = ttest_unpaired(ra, rb, 0.05, welch);
      c.t = t.t;
      c.p = t.p;
      c.significant = t.significant;
    }
    rows.push_back(c);
  }
  return rows;
}

std::string format_comparison(const std::vector<Comparison>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %12s %12s %10s %10s %s\n", "metric",
                "mean_a", "mean_b", "t", "p", "significant");
  out << line;
  for (const auto& c : rows) {
    std::snprintf(line, sizeof line, "%-12s %12s %12s %10s %10s %s\n",
                  c.metric.c_str(), fmt(c.mean_a).c_str(), fmt(c.mean_b).c_str(),
                  c.t ? fmt(*c.t).c_str() : "-", c.p ? fmt(*c.p).c_str() : "-",
                  c.p ? (c.significant ? "yes" : "no") : "n/a");
    out << line;
  }
  return out.str();
}

const Record& modal_record(const std::vector<Record>& train) {
  if (train.empty()) throw Error("modal_record: empty training set");
  std::map<double, int> counts;
  std::vector<double> targets;
  for (const Record& r : train) {
    targets.push_back(FunctionalDescription::parse(r.desc).target);
    ++counts[targets.back()];
  }
  double mode = targets[0];
  int best = 0;
  for (double t : targets) {
    if (counts[t] > best) {
      best = counts[t];
      mode = t;
    }
  }
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (targets[i] == mode) return train[i];
  }
  return train[0];
}

double constant_predictor_mae(const Record& graph,
                              const std::vector<Record>& test,
                              PropertyKind task) {
  std::vector<std::pair<double, std::string>> samples;
  for (const Record& r : test) {
    samples.emplace_back(FunctionalDescription::parse(r.desc).target,
                         graph.graph);
  }
  return mae(samples, task);
}

}  // namespace graphseq
