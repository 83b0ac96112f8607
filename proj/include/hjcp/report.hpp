// Check outcomes and the shared modulus-envelope certification used by every
// modulus-of-continuity style hypothesis check.
#pragma once

#include "hjcp/core.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace hjcp {

struct CheckReport {
  std::string name;
  bool passed = true;
  double worst = 0.0;  // worst violation measure (check-specific)
  std::string witness;
  std::map<std::string, double> stats;
  std::vector<std::string> notes;

  void fail(double violation, const std::string& w) {
    if (!passed && violation <= worst) return;
    passed = false;
    worst = std::max(worst, violation);
    witness = w;
  }
};

// A fitted nondecreasing envelope omega with omega(0) certified near zero.
struct EnvelopeFit {
  std::vector<double> abscissa;  // sorted r values
  std::vector<double> fitted;    // isotonic fit of the observations
  double value_at_zero = 0.0;    // extrapolated omega(0)
  double slope = 0.0;            // linear trend near zero
};

namespace detail {

// Pool-adjacent-violators: least-squares nondecreasing fit.
inline std::vector<double> pava(const std::vector<double>& y) {
  const size_t n = y.size();
  std::vector<double> level(n), weight(n);
  std::vector<size_t> count(n);
  size_t blocks = 0;
  for (size_t i = 0; i < n; ++i) {
    level[blocks] = y[i];
    weight[blocks] = 1;
    count[blocks] = 1;
    ++blocks;
    while (blocks > 1 && level[blocks - 2] > level[blocks - 1]) {
      const double w = weight[blocks - 2] + weight[blocks - 1];
      level[blocks - 2] =
          (level[blocks - 2] * weight[blocks - 2] + level[blocks - 1] * weight[blocks - 1]) / w;
      weight[blocks - 2] = w;
      count[blocks - 2] += count[blocks - 1];
      --blocks;
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (size_t b = 0; b < blocks; ++b) out.insert(out.end(), count[b], level[b]);
  return out;
}

}  // namespace detail

// Certify a modulus envelope for observations s_i <= omega(r_i): isotonic
// regression of s against r, then a linear extrapolation of the fit over the
// lowest quartile of abscissae down to r = 0. The hypothesis passes when the
// extrapolated omega(0) stays below the tolerance.
inline EnvelopeFit fit_envelope(std::vector<std::pair<double, double>> samples) {
  EnvelopeFit fit;
  if (samples.empty()) return fit;
  std::sort(samples.begin(), samples.end());
  std::vector<double> s;
  s.reserve(samples.size());
  for (auto& p : samples) {
    fit.abscissa.push_back(p.first);
    s.push_back(p.second);
  }
  fit.fitted = detail::pava(s);

  const size_t n = fit.abscissa.size();
  size_t m = std::max<size_t>(std::min<size_t>(n, 8), n / 4);
  m = std::min(m, n);
  // Least-squares line through the first m fitted points.
  double sr = 0, ss = 0, srr = 0, srs = 0;
  for (size_t i = 0; i < m; ++i) {
    sr += fit.abscissa[i];
    ss += fit.fitted[i];
    srr += fit.abscissa[i] * fit.abscissa[i];
    srs += fit.abscissa[i] * fit.fitted[i];
  }
  const double denom = m * srr - sr * sr;
  if (m >= 2 && std::abs(denom) > 1e-300) {
    fit.slope = (m * srs - sr * ss) / denom;
    fit.value_at_zero = (ss - fit.slope * sr) / m;
  } else {
    fit.value_at_zero = fit.fitted.front();
  }
  return fit;
}

// Representative (abscissa, fitted) pairs for report consumption.
inline void record_envelope(CheckReport& rep, const EnvelopeFit& fit) {
  rep.stats["envelope_at_zero"] = fit.value_at_zero;
  rep.stats["envelope_slope"] = fit.slope;
  if (fit.abscissa.empty()) return;
  const size_t n = fit.abscissa.size();
  for (const auto& [label, idx] :
       std::initializer_list<std::pair<const char*, size_t>>{
           {"envelope_r25", n / 4}, {"envelope_r50", n / 2}, {"envelope_r75", 3 * n / 4}}) {
    rep.stats[label] = fit.abscissa[idx];
    rep.stats[std::string(label) + "_value"] = fit.fitted[idx];
  }
}

inline std::string describe_point(const Vec& x) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < x.size(); ++i) {
    if (i) os << ",";
    os << x[i];
  }
  os << ")";
  return os.str();
}

}  // namespace hjcp
