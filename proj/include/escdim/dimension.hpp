#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "escdim/dynamics.hpp"
#include "escdim/errors.hpp"
#include "escdim/geometry.hpp"
#include "escdim/numeric.hpp"
#include "escdim/parallel.hpp"

namespace escdim {

// Number of boxes of side `size`, anchored at the region corner, holding at
// least one point.
inline std::size_t box_count(const std::vector<PlanePoint>& points, double size, const Rect& region) {
  require(!points.empty(), "box counting needs at least one point");
  require(size > 0.0 && std::isfinite(size), "box size must be positive");
  region.validate();
  std::vector<std::uint64_t> keys;
  keys.reserve(points.size());
  for (const PlanePoint& p : points) {
    require(p.finite() && region.contains(p.value()), "box counting point lies outside the region");
    const auto ix = static_cast<std::uint64_t>(std::floor((p.re() - region.x0) / size));
    const auto iy = static_cast<std::uint64_t>(std::floor((p.im() - region.y0) / size));
    keys.push_back((ix << 32) | iy);
  }
  std::sort(keys.begin(), keys.end());
  return static_cast<std::size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

struct DimensionEstimate {
  double value = 0.0;  // negated slope of log count against log size
  std::vector<double> scales_used;
  std::vector<std::size_t> counts;
  double fit_residual = 0.0;
  std::size_t point_count = 0;
};

inline DimensionEstimate fit_box_dimension(const std::vector<PlanePoint>& points, const std::vector<double>& sizes,
                                           const Rect& region, int jobs = default_jobs()) {
  require(sizes.size() >= 4, "box dimension fit needs at least four sizes");
  DimensionEstimate est;
  est.scales_used = sizes;
  est.counts.assign(sizes.size(), 0);
  est.point_count = points.size();
  parallel_for(sizes.size(), jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) est.counts[i] = box_count(points, sizes[i], region);
  });
  std::vector<double> x, y;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    x.push_back(-std::log(sizes[i]));
    y.push_back(std::log(static_cast<double>(est.counts[i])));
  }
  const LineFit fit = fit_line(x, y);
  est.value = fit.slope;
  est.fit_residual = fit.rms_residual;
  return est;
}

inline void write_box_counts_csv(const DimensionEstimate& est, std::ostream& out) {
  out << "box_size,count\n";
  for (std::size_t i = 0; i < est.scales_used.size(); ++i) {
    out << format_double(est.scales_used[i]) << ',' << est.counts[i] << '\n';
  }
}

// Densities Delta_l and diameters d_l of a nested cover, stored as logarithms
// so that d_l far below the double range stays representable.
struct CoverSequence {
  std::vector<double> log_deltas;     // log Delta_l <= 0
  std::vector<double> log_diameters;  // log d_l < 0
  int ambient_dimension = 2;

  static CoverSequence from_values(const std::vector<double>& deltas, const std::vector<double>& diameters,
                                   int ambient = 2) {
    CoverSequence c;
    c.ambient_dimension = ambient;
    for (double d : deltas) {
      require(d > 0.0 && d <= 1.0, "densities must lie in (0, 1]");
      c.log_deltas.push_back(std::log(d));
    }
    for (double d : diameters) {
      require(d > 0.0 && d < 1.0, "diameters must lie in (0, 1)");
      c.log_diameters.push_back(std::log(d));
    }
    c.validate();
    return c;
  }

  std::size_t levels() const { return log_deltas.size(); }

  void validate() const {
    require(!log_deltas.empty(), "cover sequence is empty");
    require(log_deltas.size() == log_diameters.size(), "cover sequence lengths differ");
    require(ambient_dimension >= 1, "ambient dimension must be positive");
    for (double v : log_deltas) require(std::isfinite(v) && v <= 0.0, "densities must lie in (0, 1]");
    for (double v : log_diameters) require(std::isfinite(v) && v < 0.0, "diameters must lie in (0, 1)");
  }
};

struct McMullenEstimate {
  double bound = 0.0;   // ambient dimension minus the limsup proxy
  double ratio = 0.0;   // limsup proxy
  double spread = 0.0;  // max - min of the extrapolated ratio over the final third
  std::vector<double> running_ratio;  // (sum_{j<=l+1} |log Delta_j|) / |log d_l|, l = 1..L-1
  std::vector<double> extrapolated;   // l r_l - (l-1) r_{l-1}, l = 2..L-1
};

// Lower bound n - limsup_l (sum_{j<=l+1} |log Delta_j|) / |log d_l| from a
// finite prefix. The running ratio approaches its limit like c + c'/l for
// regular covers, so each r_l is first extrapolated as l r_l - (l-1) r_{l-1}
// (exact for geometric covers); the limsup proxy is the largest extrapolated
// value over the final third of the available levels.
inline McMullenEstimate mcmullen_bound(const CoverSequence& cover) {
  cover.validate();
  const std::size_t L = cover.levels();
  require(L >= 4, "nested-cover bound needs at least four levels");
  McMullenEstimate est;
  KahanSum numerator;
  numerator.add(-cover.log_deltas[0]);
  for (std::size_t l = 1; l < L; ++l) {
    numerator.add(-cover.log_deltas[l]);  // now sums Delta_1..Delta_{l+1}
    est.running_ratio.push_back(numerator.value() / -cover.log_diameters[l - 1]);
  }
  for (std::size_t i = 1; i < est.running_ratio.size(); ++i) {
    const double l = static_cast<double>(i + 1);
    est.extrapolated.push_back(l * est.running_ratio[i] - (l - 1.0) * est.running_ratio[i - 1]);
  }
  const std::size_t n = est.extrapolated.size();
  const std::size_t first = n - std::max<std::size_t>(1, n / 3);
  const auto [lo, hi] = std::minmax_element(est.extrapolated.begin() + static_cast<std::ptrdiff_t>(first),
                                            est.extrapolated.end());
  est.ratio = *hi;
  est.spread = *hi - *lo;
  est.bound = static_cast<double>(cover.ambient_dimension) - est.ratio;
  return est;
}

// Delta_l = B / R^(2/M), d_l = (A / R^(rho/2 + 1/M))^l.
inline CoverSequence construction_cover_sequence(double rho, int M, double R, double A, double B, int levels) {
  require(rho > 0.0, "rho must be positive");
  require(M >= 1, "M must be a positive integer");
  require(R > 1.0 && std::isfinite(R), "R must exceed 1");
  require(A > 0.0 && B > 0.0, "cover constants must be positive");
  require(levels >= 4, "cover sequence needs at least four levels");
  const double m = static_cast<double>(M);
  const double log_d1 = std::log(A) - (rho / 2.0 + 1.0 / m) * std::log(R);
  const double log_delta = std::log(B) - (2.0 / m) * std::log(R);
  require(log_d1 < 0.0, "R too small: first-level diameter is not below 1");
  require(log_delta <= 0.0, "R too small: density exceeds 1");
  CoverSequence c;
  for (int l = 1; l <= levels; ++l) {
    c.log_deltas.push_back(log_delta);
    c.log_diameters.push_back(static_cast<double>(l) * log_d1);
  }
  return c;
}

// d_l = 2^-l for densities measured on dyadic refinements of a unit region.
inline CoverSequence dyadic_cover_sequence(const std::vector<double>& deltas) {
  std::vector<double> diameters;
  for (std::size_t l = 1; l <= deltas.size(); ++l) diameters.push_back(std::ldexp(1.0, -static_cast<int>(l)));
  return CoverSequence::from_values(deltas, diameters);
}

inline void write_cover_csv(const CoverSequence& cover, const McMullenEstimate& est, std::ostream& out) {
  out << "level,log_delta,log_diameter,running_ratio\n";
  for (std::size_t l = 0; l < cover.levels(); ++l) {
    out << (l + 1) << ',' << format_double(cover.log_deltas[l]) << ',' << format_double(cover.log_diameters[l])
        << ',';
    if (l < est.running_ratio.size()) out << format_double(est.running_ratio[l]);
    out << '\n';
  }
}

struct DensityProfile {
  std::vector<double> deltas;  // level q = 0..refinement
  std::string diagnostic;
};

// At each dyadic level q the grid is split into 2^q x 2^q blocks; the level's
// density is the smallest escaping share among blocks that hold any escaping
// cell, i.e. an empirical dens(E_{q+1}, V) over V in E_q.
inline DensityProfile measure_densities(const GridClassification& grid, int refinement) {
  require(refinement >= 0, "refinement must be nonnegative");
  const int nx = grid.grid.nx;
  const int ny = grid.grid.ny;
  require((1 << std::min(refinement, 30)) <= std::min(nx, ny), "refinement finer than the grid");
  DensityProfile out;
  if (grid.count(Classification::escaping) == 0) {
    out.diagnostic = "no escaping cells; density profile is empty";
    return out;
  }
  for (int q = 0; q <= refinement; ++q) {
    const int blocks = 1 << q;
    std::vector<std::size_t> hits(static_cast<std::size_t>(blocks) * blocks, 0);
    std::vector<std::size_t> cells(hits.size(), 0);
    for (int iy = 0; iy < ny; ++iy) {
      const int by = static_cast<int>(static_cast<long long>(iy) * blocks / ny);
      for (int ix = 0; ix < nx; ++ix) {
        const int bx = static_cast<int>(static_cast<long long>(ix) * blocks / nx);
        const std::size_t b = static_cast<std::size_t>(by) * blocks + static_cast<std::size_t>(bx);
        ++cells[b];
        if (grid.cells[static_cast<std::size_t>(iy) * nx + static_cast<std::size_t>(ix)] == Classification::escaping) {
          ++hits[b];
        }
      }
    }
    double delta = 1.0;
    for (std::size_t b = 0; b < hits.size(); ++b) {
      if (hits[b] > 0) delta = std::min(delta, static_cast<double>(hits[b]) / static_cast<double>(cells[b]));
    }
    out.deltas.push_back(delta);
  }
  return out;
}

}  // namespace escdim
