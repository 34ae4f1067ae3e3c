#pragma once

#include <span>

namespace graphseq {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;  // two-sided
  double df = 0.0;
  bool significant = false;
};

// Unpaired two-sample t-test. Pooled variance by default, Welch's
// unequal-variance form when `welch` is set. With zero variance on both
// sides: equal means give p = 1, unequal means p = 0. Throws Error when a
// side has fewer than two values.
TTestResult ttest_unpaired(std::span<const double> a, std::span<const double> b,
                           double alpha = 0.05, bool welch = false);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_sd(std::span<const double> v);
// sample_sd / sqrt(n); 0 for fewer than two values.
double standard_error(std::span<const double> v);

}  // namespace graphseq
