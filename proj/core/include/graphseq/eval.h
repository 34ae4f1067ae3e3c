#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphseq/model.h"
#include "graphseq/sampler.h"
#include "graphseq/text_graph.h"

namespace graphseq {

// Property of a generated serialization, or nullopt if it does not parse
// or the oracle rejects it.
std::optional<double> score_graph(std::string_view generated, PropertyKind task);
std::optional<double> score_tokens(std::span<const int> generated,
                                   PropertyKind task);

// 1 iff `generated` deserializes and the task oracle evaluates.
int parsability_score(std::string_view generated, PropertyKind task);

// Mean |oracle(graph) - target| over the parsable samples. Throws
// NoParsableSamplesError if there are none.
double mae(std::span<const std::pair<double, std::string>> samples,
           PropertyKind task);

// 1 iff both samples parse and the three graphs are pairwise distinct.
int diversity_score(std::string_view sample1, std::string_view sample2,
                    const TextGraph& ground_truth);

struct EvalConfig {
  int repeats = 3;
  std::uint64_t seed = 0;
  SamplingPolicy policy{};
  int max_new_tokens = 256;
  int workers = 0;  // 0 means hardware concurrency

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
  static EvalConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct SampleRecord {
  int repeat = 0;
  int index = 0;  // into the test set
  double target = 0.0;
  std::string sample1, sample2;  // decoded text; sample1 is scored
  std::optional<double> value;   // oracle on sample1
  int parsable = 0;
  int diverse = 0;
};

struct MetricSummary {
  std::string name;
  std::vector<double> runs;  // one value per repeat (NaN when undefined)
  double mean = 0.0;
  double std_error = 0.0;
  int n = 0;  // runs with a defined value
};

struct EvalReport {
  PropertyKind task = PropertyKind::kValencyElectrons;
  std::string checkpoint_id;
  std::uint64_t seed = 0;
  int repeats = 0;
  std::vector<MetricSummary> metrics;  // parsability, mae, diversity
  std::vector<SampleRecord> samples;

  const MetricSummary& metric(std::string_view name) const;
};

// Summary of per-run values: mean and sample-sd / sqrt(n) standard error
// over the defined (non-NaN) entries; stderr is 0 for a single run.
MetricSummary summarize(std::string name, std::vector<double> runs);

// Draws two samples per test prompt, `repeats` times, and scores them.
// Deterministic for a given seed regardless of worker count.
EvalReport evaluate(const ModelParams& params, const std::vector<Record>& test,
                    PropertyKind task, const EvalConfig& config,
                    std::string checkpoint_id = "");

// Aligned-column table for people.
std::string format_report_text(const EvalReport& report);
// `metric=<name> task=<t> mean=<v> stderr=<v> n=<k>` lines followed by
// `metric=<name> task=<t> run=<r> value=<v>` lines.
std::string format_report_lines(const EvalReport& report);
// One tab-separated line per drawn sample pair.
std::string format_samples(const EvalReport& report);

// Machine lines read back: task plus per-metric run values.
struct ParsedReport {
  std::string task;
  std::map<std::string, MetricSummary> metrics;
};
// Throws IoError on malformed input.
ParsedReport parse_report_lines(std::string_view text);

struct Comparison {
  std::string metric;
  double mean_a = 0.0, mean_b = 0.0;
  std::optional<double> t, p;  // unset if either side has < 2 runs
  bool significant = false;
};

// Per-metric unpaired t-tests. Throws ConfigError on mismatched tasks.
std::vector<Comparison> compare_reports(const ParsedReport& a,
                                        const ParsedReport& b,
                                        bool welch = false);
std::string format_comparison(const std::vector<Comparison>& rows);

// The training graph whose target is the most frequent training target
// (first such record on ties and within the mode).
const Record& modal_record(const std::vector<Record>& train);
// MAE of always emitting `graph` against the test targets.
double constant_predictor_mae(const Record& graph,
                              const std::vector<Record>& test,
                              PropertyKind task);

}  // namespace graphseq
