#include "graphseq/loss.h"

#include <cmath>

#include "graphseq/errors.h"

namespace graphseq {

std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kPerExample:
      return "per_example";
    case LossKind::kPerToken:
      return "per_token";
    case LossKind::kExpectedTokens:
      return "expected_tokens";
  }
  return "per_example";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "per_example") return LossKind::kPerExample;
  if (name == "per_token") return LossKind::kPerToken;
  if (name == "expected_tokens") return LossKind::kExpectedTokens;
  throw ConfigError("unknown loss kind: " + std::string(name));
}

void LossSpec::validate() const {
  if (kind == LossKind::kExpectedTokens &&
      !(expected_token_count > 0.0 && std::isfinite(expected_token_count))) {
    throw ConfigError("expected_tokens loss needs expected_token_count > 0");
  }
}

double token_nll(const Matrix& logits, std::span<const int> targets,
                 Matrix* dlogits) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw MismatchError("token_nll: logits/targets row mismatch");
  }
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int y = targets[r];
    if (y < 0) continue;
    if (y >= logits.cols()) throw MismatchError("token_nll: target out of range");
    const auto row = logits.row(r);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(y);
    if (dlogits) {
      dlogits->row(r) = (row.array() - lse).exp();
      (*dlogits)(r, y) -= 1.0;
    }
  }
  return total;
}

double loss_denominator(const LossSpec& spec, int examples, long tokens) {
  switch (spec.kind) {
    case LossKind::kPerExample:
      return static_cast<double>(examples);
    case LossKind::kPerToken:
      return static_cast<double>(tokens);
    case LossKind::kExpectedTokens:
      return spec.expected_token_count;
  }
  return static_cast<double>(examples);
}

double compute_loss(std::span<const Matrix> logits,
                    std::span<const std::vector<int>> targets,
                    const LossSpec& spec, std::vector<Matrix>* dlogits) {
  if (logits.empty()) throw Error("compute_loss: empty batch");
  if (logits.size() != targets.size()) {
    throw MismatchError("compute_loss: logits/targets count mismatch");
  }
  spec.validate();
  long tokens = 0;
  for (const auto& t : targets) {
    for (int y : t) tokens += y >= 0;
  }
  if (tokens == 0) throw Error("compute_loss: batch has no targets");
  if (dlogits) dlogits->assign(logits.size(), Matrix());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    sum += token_nll(logits[i], targets[i], dlogits ? &(*dlogits)[i] : nullptr);
  }
  const double denom =
      loss_denominator(spec, static_cast<int>(logits.size()), tokens);
  if (dlogits) {
    for (Matrix& d : *dlogits) d /= denom;
  }
  return sum / denom;
}

}  // namespace graphseq
