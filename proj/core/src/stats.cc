#include "graphseq/stats.h"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>

#include "graphseq/errors.h"

namespace graphseq {

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

TTestResult ttest_unpaired(std::span<const double> a, std::span<const double> b,
                           double alpha, bool welch) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error("t-test needs at least two values per side");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double va = sample_sd(a) * sample_sd(a);
  const double vb = sample_sd(b) * sample_sd(b);
  TTestResult r;
  double se2;
  if (welch) {
    se2 = va / na + vb / nb;
    const double num = se2 * se2;
    const double den = (va / na) * (va / na) / (na - 1) +
                       (vb / nb) * (vb / nb) / (nb - 1);
    r.df = den > 0.0 ? num / den : na + nb - 2;
  } else {
    r.df = na + nb - 2;
    const double pooled = ((na - 1) * va + (nb - 1) * vb) / r.df;
    se2 = pooled * (1.0 / na + 1.0 / nb);
  }
  if (se2 == 0.0) {
    if (ma == mb) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity()
                    : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
  } else {
    r.t = (ma - mb) / std::sqrt(se2);
    const boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  }
  r.significant = r.p < alpha;
  return r;
}

}  // namespace graphseq
