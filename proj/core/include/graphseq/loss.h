#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "graphseq/model.h"

namespace graphseq {

enum class LossKind {
  kPerExample,      // summed NLL per sequence, averaged over the batch
  kPerToken,        // summed NLL divided by the batch token count
  kExpectedTokens,  // summed NLL divided by a fixed expected token count
};

std::string_view loss_kind_name(LossKind kind);
// Throws ConfigError on an unknown name.
LossKind parse_loss_kind(std::string_view name);

struct LossSpec {
  LossKind kind = LossKind::kPerExample;
  double expected_token_count = 0.0;  // used by kExpectedTokens only

  // Throws ConfigError if kExpectedTokens lacks a positive count.
  void validate() const;
};

// Target value for rows that do not contribute to the loss.
inline constexpr int kIgnoreTarget = -1;

// Sum over rows r with targets[r] >= 0 of -log softmax(logits.row(r))
// [targets[r]]. If `dlogits` is non-null it receives d(sum)/d(logits).
double token_nll(const Matrix& logits, std::span<const int> targets,
                 Matrix* dlogits = nullptr);

// Divisor applied to the summed NLL of a batch with `examples` sequences
// and `tokens` contributing targets.
double loss_denominator(const LossSpec& spec, int examples, long tokens);

// Batch loss over per-sequence logits and targets (same row count each).
// When `dlogits` is non-null it receives the gradient of the returned loss
// for every sequence. Throws Error on an empty batch.
double compute_loss(std::span<const Matrix> logits,
                    std::span<const std::vector<int>> targets,
                    const LossSpec& spec,
                    std::vector<Matrix>* dlogits = nullptr);

}  // namespace graphseq
