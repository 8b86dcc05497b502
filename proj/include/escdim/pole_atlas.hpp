#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "escdim/errors.hpp"
#include "escdim/function_catalog.hpp"
#include "escdim/numeric.hpp"
#include "escdim/tolerances.hpp"

namespace escdim {

// Pole a_j of the constructed function together with its scale b_j, where
// f(z) ~ (b_j / (z - a_j))^(m_j) near a_j.
struct PoleEntry {
  std::int64_t j = 0;  // 1-based rank by modulus
  complex location;
  complex scale;
  int multiplicity = 1;
  long ring = 0;  // k in u_{k,l}
  long slot = 0;  // l in u_{k,l}
};

// Cover-sum terms (|b_j| / |a_j|^(1+1/M)) grouped by modulus: entry i stands
// for `weights[i]` poles of modulus moduli[i], each contributing
// exp(log_terms[i])^t. Moduli are nondecreasing.
struct CoverTerms {
  double r_max = 0.0;
  std::vector<double> moduli;
  std::vector<double> log_terms;
  std::vector<double> weights;
  std::vector<double> cumulative;  // running sum of weights
  std::size_t pole_count = 0;

  void push(double modulus, double log_term, double weight) {
    moduli.push_back(modulus);
    log_terms.push_back(log_term);
    weights.push_back(weight);
    cumulative.push_back((cumulative.empty() ? 0.0 : cumulative.back()) + weight);
    pole_count += static_cast<std::size_t>(weight);
  }
};

// Poles ordered by nondecreasing modulus; ties within a ring by slot.
class PoleAtlas {
 public:
  PoleAtlas(std::vector<PoleEntry> entries, double r_max, double rho, int M)
      : entries_(std::move(entries)), r_max_(r_max), rho_(rho), M_(M) {
    terms_.r_max = r_max_;
    const double exponent = 1.0 + 1.0 / static_cast<double>(M_);
    for (const PoleEntry& e : entries_) {
      // The ring modulus k^mu, not |location|, so that ties stay exact.
      const double a = std::pow(static_cast<double>(e.ring), 2.0 / rho_);
      terms_.push(a, std::log(std::abs(e.scale)) - exponent * std::log(a), 1.0);
    }
  }

  const std::vector<PoleEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double r_max() const { return r_max_; }
  double rho() const { return rho_; }
  double mu() const { return 2.0 / rho_; }
  int M() const { return M_; }

  // |a_j| for every entry, in atlas order.
  const std::vector<double>& moduli() const { return terms_.moduli; }
  // log(|b_j| / |a_j|^(1+1/M)) for every entry.
  const std::vector<double>& log_cover_terms() const { return terms_.log_terms; }
  // One term per entry.
  const CoverTerms& cover_terms() const { return terms_; }

 private:
  std::vector<PoleEntry> entries_;
  CoverTerms terms_;
  double r_max_;
  double rho_;
  int M_;
};

// Largest ring index k with k^mu <= r, using the same pow() as the atlas.
inline long ring_count(double r, double mu) {
  if (r < 1.0) return 0;
  long k = static_cast<long>(std::floor(std::pow(r, 1.0 / mu)));
  while (k > 0 && std::pow(static_cast<double>(k), mu) > r) --k;
  while (std::pow(static_cast<double>(k + 1), mu) <= r) ++k;
  return k;
}

// Radius holding `rings` complete rings with a half-ring margin.
inline double default_atlas_radius(double rho, long rings = Tolerances::default_atlas_rings) {
  return std::pow(static_cast<double>(rings) + 0.5, 2.0 / rho);
}

inline PoleAtlas build_atlas(double rho, int M, double r_max,
                             std::size_t entry_cap = Tolerances::atlas_entry_cap) {
  require(rho > 0.0 && std::isfinite(rho), "rho must be positive");
  require(M >= 1, "M must be a positive integer");
  require(r_max >= 1.0, "r_max must be at least 1");
  const double mu = 2.0 / rho;
  const long rings = ring_count(r_max, mu);
  const double total = static_cast<double>(rings) * static_cast<double>(rings + 1);
  if (total > static_cast<double>(entry_cap)) {
    throw ValidationError("atlas would hold " + std::to_string(static_cast<long long>(total)) +
                          " entries, above the cap of " + std::to_string(entry_cap));
  }
  std::vector<PoleEntry> entries;
  entries.reserve(static_cast<std::size_t>(total));
  std::int64_t j = 1;
  for (long k = 1; k <= rings; ++k) {
    for (long l = 0; l < 2 * k; ++l) {
      entries.push_back({j++, pole_location(k, l, mu), pole_residue(k, l, mu), M, k, l});
    }
  }
  return PoleAtlas(std::move(entries), r_max, rho, M);
}

// The same cover terms with each ring's 2k equal terms merged into one
// weighted term; no per-pole storage, so far larger radii are reachable.
inline CoverTerms ring_cover_terms(double rho, int M, double r_max) {
  require(rho > 0.0 && std::isfinite(rho), "rho must be positive");
  require(M >= 1, "M must be a positive integer");
  require(r_max >= 1.0, "r_max must be at least 1");
  const double mu = 2.0 / rho;
  const long rings = ring_count(r_max, mu);
  if (rings > static_cast<long>(Tolerances::max_cover_rings)) {
    throw ValidationError("radius spans " + std::to_string(rings) + " rings, above the cap of " +
                          std::to_string(static_cast<long>(Tolerances::max_cover_rings)));
  }
  const double exponent = 1.0 + 1.0 / static_cast<double>(M);
  CoverTerms terms;
  terms.r_max = r_max;
  for (long k = 1; k <= rings; ++k) {
    const double kd = static_cast<double>(k);
    const double a = std::pow(kd, mu);
    const double b = std::pow(kd, mu - 1.0);
    terms.push(a, std::log(b) - exponent * std::log(a), 2.0 * kd);
  }
  return terms;
}

// n(r): number of poles with |a_j| <= r.
inline std::size_t counting_function(const CoverTerms& terms, double r) {
  require(r <= terms.r_max, "counting radius exceeds the atlas radius");
  const auto& m = terms.moduli;
  const auto i = static_cast<std::size_t>(std::upper_bound(m.begin(), m.end(), r) - m.begin());
  return i == 0 ? 0 : static_cast<std::size_t>(terms.cumulative[i - 1]);
}

inline std::size_t counting_function(const PoleAtlas& atlas, double r) {
  return counting_function(atlas.cover_terms(), r);
}

// sum over lo < |a_j| <= hi of (|b_j| / |a_j|^(1+1/M))^t.
inline double cover_sum_window(const CoverTerms& terms, double t, double lo, double hi) {
  const auto& m = terms.moduli;
  const std::size_t begin = static_cast<std::size_t>(std::upper_bound(m.begin(), m.end(), lo) - m.begin());
  const std::size_t end = static_cast<std::size_t>(std::upper_bound(m.begin(), m.end(), hi) - m.begin());
  KahanSum sum;
  for (std::size_t i = begin; i < end; ++i) sum.add(terms.weights[i] * std::exp(t * terms.log_terms[i]));
  return sum.value();
}

inline double cover_sum_window(const PoleAtlas& atlas, double t, double lo, double hi) {
  return cover_sum_window(atlas.cover_terms(), t, lo, hi);
}

// Partial sum of (|b_j| / |a_j|^(1+1/M))^t over entries with |a_j| > skip_below.
inline double cover_sum(const CoverTerms& terms, double t, double skip_below = 0.0) {
  require(t > 0.0 && t <= 2.0, "cover-sum exponent must lie in (0, 2]");
  require(skip_below >= 0.0, "skip radius must be nonnegative");
  return cover_sum_window(terms, t, skip_below, terms.r_max);
}

inline double cover_sum(const PoleAtlas& atlas, double t, double skip_below = 0.0) {
  return cover_sum(atlas.cover_terms(), t, skip_below);
}

// 2 M rho / (2 + M rho)
inline double dimension_bound(double rho, int M) {
  require(rho > 0.0, "rho must be positive");
  require(M >= 1, "M must be a positive integer");
  const double mr = static_cast<double>(M) * rho;
  return 2.0 * mr / (2.0 + mr);
}

// Log-log slope of the cover-sum increments over the three top dyadic
// windows (r/8, r/4], (r/4, r/2], (r/2, r]. Negative means the tail shrinks.
inline double cover_tail_slope(const CoverTerms& terms, double t) {
  const double r = terms.r_max;
  const double s1 = cover_sum_window(terms, t, r / 8.0, r / 4.0);
  const double s3 = cover_sum_window(terms, t, r / 2.0, r);
  if (!(s1 > 0.0) || !(s3 > 0.0)) throw NumericalError("empty dyadic window; atlas too small");
  // Least squares through three equally spaced abscissae only uses the ends.
  return (std::log(s3) - std::log(s1)) / (2.0 * std::log(2.0));
}

inline double cover_tail_slope(const PoleAtlas& atlas, double t) { return cover_tail_slope(atlas.cover_terms(), t); }

struct ThresholdEstimate {
  double value = 0.0;
  double bracket_width = 0.0;
  int iterations = 0;
  std::vector<double> scan_t;
  std::vector<double> scan_slope;
};

// Convergence threshold of the cover sum: bisection on t between the
// divergent and convergent regimes, after a scan that confirms a single
// switch.
inline ThresholdEstimate critical_exponent(const CoverTerms& terms) {
  if (terms.pole_count < Tolerances::min_threshold_entries) {
    throw ValidationError("threshold search needs at least " +
                          std::to_string(Tolerances::min_threshold_entries) + " atlas entries");
  }
  const double lo0 = Tolerances::threshold_lo;
  const double hi0 = Tolerances::threshold_hi;
  auto convergent = [&](double t) { return cover_tail_slope(terms, t) < Tolerances::convergence_slope; };

  ThresholdEstimate est;
  const int n = Tolerances::threshold_scan_points;
  bool seen_convergent = false;
  for (int i = 0; i < n; ++i) {
    const double t = lo0 + (hi0 - lo0) * i / (n - 1);
    const double slope = cover_tail_slope(terms, t);
    est.scan_t.push_back(t);
    est.scan_slope.push_back(slope);
    const bool c = slope < Tolerances::convergence_slope;
    if (seen_convergent && !c) throw NumericalError("cover-sum classification is not monotone in t");
    seen_convergent = seen_convergent || c;
  }
  if (convergent(lo0) || !convergent(hi0)) {
    throw NumericalError("threshold not bracketed by (0.01, 2)");
  }

  double lo = lo0;
  double hi = hi0;
  for (int i = 0; i < Tolerances::threshold_bisections; ++i) {
    const double mid = 0.5 * (lo + hi);
    (convergent(mid) ? hi : lo) = mid;
  }
  est.value = 0.5 * (lo + hi);
  est.bracket_width = hi - lo;
  est.iterations = Tolerances::threshold_bisections;
  return est;
}

inline ThresholdEstimate critical_exponent(const PoleAtlas& atlas) { return critical_exponent(atlas.cover_terms()); }

struct OrderEstimate {
  double value = 0.0;
  double residual = 0.0;
  std::vector<double> radii;
  std::vector<double> counts;
};

// Slope of log n(r) against log r over the top dyadic radii.
inline OrderEstimate convergence_exponent_estimate(const CoverTerms& terms, int max_scales = 10) {
  OrderEstimate est;
  for (int i = 0; i < max_scales; ++i) {
    const double r = std::ldexp(terms.r_max, -i);
    if (r < 1.0) break;
    const std::size_t count = counting_function(terms, r);
    if (count < 100 && !est.radii.empty()) break;
    if (count == 0) break;
    est.radii.push_back(r);
    est.counts.push_back(static_cast<double>(count));
  }
  if (est.radii.size() < 2 || est.counts.front() == est.counts.back()) {
    throw ValidationError("order estimate needs at least two dyadic scales with distinct counts");
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < est.radii.size(); ++i) {
    x.push_back(std::log(est.radii[i]));
    y.push_back(std::log(est.counts[i]));
  }
  const LineFit fit = fit_line(x, y);
  est.value = fit.slope;
  est.residual = fit.rms_residual;
  return est;
}

inline OrderEstimate convergence_exponent_estimate(const PoleAtlas& atlas, int max_scales = 10) {
  return convergence_exponent_estimate(atlas.cover_terms(), max_scales);
}

struct PackingRow {
  double radius;
  double scale_square_sum;
  double bound;
  bool holds;
};

// sum_{|a_j| <= r} |b_j|^2 <= 36 R^2 r^2 at every dyadic r <= r_max.
inline std::vector<PackingRow> packing_check(const PoleAtlas& atlas,
                                             double working_radius = Tolerances::packing_radius) {
  std::vector<PackingRow> rows;
  KahanSum sum;
  std::size_t next = 0;
  const auto& entries = atlas.entries();
  for (int i = 0; std::ldexp(1.0, i) <= atlas.r_max(); ++i) {
    const double r = std::ldexp(1.0, i);
    while (next < entries.size() && atlas.moduli()[next] <= r) {
      sum.add(std::norm(entries[next].scale));
      ++next;
    }
    const double bound = 36.0 * working_radius * working_radius * r * r;
    rows.push_back({r, sum.value(), bound, sum.value() <= bound});
  }
  return rows;
}

inline void write_atlas_csv(const PoleAtlas& atlas, std::ostream& out) {
  out << "j,re_a,im_a,re_b,im_b,m,ring,slot\n";
  for (const PoleEntry& e : atlas.entries()) {
    out << e.j << ',' << format_double(e.location.real()) << ',' << format_double(e.location.imag())
        << ',' << format_double(e.scale.real()) << ',' << format_double(e.scale.imag()) << ','
        << e.multiplicity << ',' << e.ring << ',' << e.slot << '\n';
  }
}

}  // namespace escdim
