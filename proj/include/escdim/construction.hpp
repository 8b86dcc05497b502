#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "escdim/dynamics.hpp"
#include "escdim/errors.hpp"
#include "escdim/function_catalog.hpp"
#include "escdim/geometry.hpp"
#include "escdim/numeric.hpp"
#include "escdim/parallel.hpp"
#include "escdim/tolerances.hpp"

namespace escdim {

// ---------------------------------------------------------------------------
// Spider's web of the series function.

struct WebConstant {
  double ring_sum = 0.0;     // sum_k 1/(2^(mu k) - 1)
  double spoke_sum = 0.0;    // sum_l 1/(2^(mu (l - 1/2)) - 1)
  double tail_bound = 0.0;   // bound on the omitted remainder of both sums
  double value() const { return ring_sum + spoke_sum; }
};

// Both sums stop once the geometric remainder (ratio <= 2^-mu) is below the
// tolerance.
inline WebConstant web_constant_parts(double mu) {
  require(mu > 0.0 && std::isfinite(mu), "mu must be positive");
  const double q = std::exp2(-mu);
  const double ln2 = std::numbers::ln2;
  WebConstant c;
  auto sum_series = [&](double offset, double& tail) {
    KahanSum s;
    for (long k = 1;; ++k) {
      const double term = 1.0 / std::expm1(mu * (static_cast<double>(k) - offset) * ln2);
      s.add(term);
      const double remainder = term * q / (1.0 - q);
      if (remainder < Tolerances::web_constant_tail) {
        tail += remainder;
        break;
      }
      if (k > 200000000L) throw NumericalError("web constant series converges too slowly");
    }
    return s.value();
  };
  c.ring_sum = sum_series(0.0, c.tail_bound);
  c.spoke_sum = sum_series(0.5, c.tail_bound);
  return c;
}

inline double compute_web_constant(double mu) { return web_constant_parts(mu).value(); }

struct WebSample {
  std::vector<PlanePoint> points;
  std::vector<double> per_point_moduli;  // |g| at each point
  std::vector<int> component;            // ring n for circles, -n for spokes of ring n
  int max_ring = 0;
  int per_component = 0;
  double mu = 0.0;

  double max_modulus() const {
    return per_point_moduli.empty() ? 0.0 : *std::max_element(per_point_moduli.begin(), per_point_moduli.end());
  }
};

// Distance (relative to |z|) from z to the web piece it was drawn from.
inline double web_membership_error(const PlanePoint& p, int component, double mu) {
  const double r = p.modulus();
  if (component > 0) {
    const double radius = std::pow(component + 0.5, mu);
    return std::abs(r - radius) / radius;
  }
  const int n = -component;
  const double lo = std::pow(n - 0.5, mu);
  const double hi = std::pow(n + 0.5, mu);
  if (r < lo * (1.0 - 1e-15) || r > hi * (1.0 + 1e-15)) return std::max(lo - r, r - hi) / r;
  // Angle must be pi (2m - 1) / 2n for some m.
  const double spokes = std::arg(p.value()) * n / std::numbers::pi - 0.5;
  return std::abs(spokes - std::round(spokes)) * std::numbers::pi / n;
}

// Circles |z| = (n + 1/2)^mu for n = 1..max_ring and spokes at angles
// pi (2m - 1) / 2n between (n - 1/2)^mu and (n + 1/2)^mu for n = 2..max_ring,
// each carrying per_component evenly spaced points.
inline WebSample sample_web(const SeriesFunctionSpec& spec, int max_ring, int per_component,
                            int jobs = default_jobs()) {
  require(max_ring >= 2, "web sampling needs max_ring >= 2");
  require(per_component >= 2, "web sampling needs at least two points per component");
  WebSample w;
  w.max_ring = max_ring;
  w.per_component = per_component;
  w.mu = spec.mu;
  const double mu = spec.mu;
  for (int n = 1; n <= max_ring; ++n) {
    const double radius = std::pow(n + 0.5, mu);
    for (int i = 0; i < per_component; ++i) {
      w.points.push_back(PlanePoint::from_polar(radius, 2.0 * std::numbers::pi * i / per_component));
      w.component.push_back(n);
    }
  }
  for (int n = 2; n <= max_ring; ++n) {
    const double lo = std::pow(n - 0.5, mu);
    const double hi = std::pow(n + 0.5, mu);
    for (int m = 1; m <= 2 * n; ++m) {
      const double angle = detail::half_turn_angle(2 * m - 1, 2 * n);
      for (int i = 0; i < per_component; ++i) {
        const double r = lo + (hi - lo) * i / (per_component - 1);
        w.points.push_back(PlanePoint::from_polar(r, angle));
        w.component.push_back(-n);
      }
    }
  }
  const SeriesFunctionSpec g_spec(spec.rho, 1, spec.truncation_margin);
  w.per_point_moduli.assign(w.points.size(), 0.0);
  parallel_for(w.points.size(), jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const EvalResult r = eval_g(w.points[i], g_spec);
      w.per_point_moduli[i] = r.is_pole ? std::numeric_limits<double>::infinity() : r.value.modulus();
    }
  });
  return w;
}

struct WebBoundCheck {
  double max_modulus = 0.0;
  double bound = 0.0;  // 4 C + 4
  double web_constant = 0.0;
  std::size_t samples = 0;
  std::size_t violations = 0;
  double max_membership_error = 0.0;
  bool pass() const { return violations == 0; }
};

inline WebBoundCheck check_web_bound(const WebSample& w) {
  WebBoundCheck c;
  c.web_constant = compute_web_constant(w.mu);
  c.bound = 4.0 * c.web_constant + 4.0;
  c.samples = w.points.size();
  c.max_modulus = w.max_modulus();
  for (std::size_t i = 0; i < w.points.size(); ++i) {
    if (!(w.per_point_moduli[i] <= c.bound)) ++c.violations;
    c.max_membership_error = std::max(c.max_membership_error, web_membership_error(w.points[i], w.component[i], w.mu));
  }
  return c;
}

// Working R0: max(2, largest |f| = |g|^M seen on a web sample). A sampled
// proxy for a disk holding the singular values, not a certified one.
inline double estimate_working_r0(const SeriesFunctionSpec& spec, int max_ring = 12, int per_component = 64,
                                  int jobs = default_jobs()) {
  const WebSample w = sample_web(spec, max_ring, per_component, jobs);
  return std::max(2.0, std::pow(w.max_modulus(), spec.M));
}

// ---------------------------------------------------------------------------
// Mayer-type derivative envelope |f'(z)| <= K |z|^(rho/2 - 1) near poles.

struct MayerReport {
  double empirical_k = 0.0;    // max |f'| / |z|^(rho/2-1) over all samples
  double k_lower_rings = 0.0;  // same, rings [ring_lo, mid)
  double k_upper_rings = 0.0;  // same, rings [mid, ring_hi]
  double slope = 0.0;          // regression of log|f'| on log|z|
  double expected_slope = 0.0;
  double web_ratio = 0.0;      // max |f'| / |z|^(rho/2-1) on web points
  std::size_t samples = 0;
};

// For each ring k in [ring_lo, ring_hi], `count` points at distance
// delta (1 + U) from a pole u of that ring, where
// delta = (1/(4 target))^(1/M) |u|^(1 - rho/2) is the radius at which f
// reaches modulus about `target`.
inline MayerReport mayer_derivative_spotcheck(const SeriesFunctionSpec& spec, int count, int ring_lo = 10,
                                              int ring_hi = 40, double target = 1e3,
                                              std::uint64_t seed = Tolerances::default_seed) {
  require(count >= 10, "derivative spot-check needs at least 10 samples per ring");
  require(ring_lo >= 1 && ring_hi > ring_lo, "ring range must be increasing");
  require(target > 1.0, "target modulus must exceed 1");
  MayerReport rep;
  rep.expected_slope = spec.rho / 2.0 - 1.0;
  const int mid = (ring_lo + ring_hi) / 2;
  std::mt19937_64 rng(stream_seed(seed, 0));
  std::vector<double> xs, ys;
  for (int k = ring_lo; k <= ring_hi; ++k) {
    for (int i = 0; i < count; ++i) {
      const long l = static_cast<long>(rng() % static_cast<std::uint64_t>(2 * k));
      const complex u = pole_location(k, l, spec.mu);
      const double delta = std::pow(0.25 / target, 1.0 / spec.M) * std::pow(std::abs(u), 1.0 - spec.rho / 2.0);
      const double dist = delta * (1.0 + unit_uniform(rng()));
      const double theta = 2.0 * std::numbers::pi * unit_uniform(rng());
      const complex z = u + std::polar(dist, theta);
      const double d = eval_f_deriv(PlanePoint(z), spec).value.modulus();
      const double ratio = d / std::pow(std::abs(z), rep.expected_slope);
      rep.empirical_k = std::max(rep.empirical_k, ratio);
      (k < mid ? rep.k_lower_rings : rep.k_upper_rings) =
          std::max(k < mid ? rep.k_lower_rings : rep.k_upper_rings, ratio);
      xs.push_back(std::log(std::abs(z)));
      ys.push_back(std::log(d));
      ++rep.samples;
    }
  }
  rep.slope = fit_line(xs, ys).slope;
  for (int n = ring_lo; n <= ring_hi; ++n) {
    const double radius = std::pow(n + 0.5, spec.mu);
    for (int i = 0; i < 16; ++i) {
      const complex z = std::polar(radius, 2.0 * std::numbers::pi * (i + 0.5) / 16.0);
      const double d = eval_f_deriv(PlanePoint(z), spec).value.modulus();
      rep.web_ratio = std::max(rep.web_ratio, d / std::pow(radius, rep.expected_slope));
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Disk-forest construction f = sum eps_k (r_k / (z - a_k))^(m_k).

struct LayoutDisk {
  complex center;
  double radius = 0.0;
};

// d_k = min_{j != k} dist(a_k, D(a_j, r_j)); +inf for a lone disk.
inline std::vector<double> layout_clearances(const std::vector<LayoutDisk>& layout) {
  std::vector<double> d(layout.size(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < layout.size(); ++k) {
    for (std::size_t j = 0; j < layout.size(); ++j) {
      if (j != k) d[k] = std::min(d[k], std::abs(layout[k].center - layout[j].center) - layout[j].radius);
    }
  }
  return d;
}

// Dyadic annulus indices n >= 1 whose P_n = {2^n <= |z| < 2^(n+1)} meets the
// open disk D(a, r).
inline std::vector<int> annuli_met(complex center, double radius) {
  std::vector<int> out;
  const double lo = std::abs(center) - radius;
  const double hi = std::abs(center) + radius;
  for (int n = 1; n < 1000; ++n) {
    const double inner = std::ldexp(1.0, n);
    if (inner >= hi) break;
    if (lo < 2.0 * inner) out.push_back(n);
  }
  return out;
}

namespace detail {

inline bool derivative_floor_holds(double eps, long m, double r) { return eps * static_cast<double>(m) / r > 2.0; }

inline double inner_growth_log(double eps, long m, double r, double r_inner) {
  return std::log(eps) + static_cast<double>(m) * std::log(r / r_inner);
}

inline double cross_term_log(long m, double r, double d) {
  if (std::isinf(d)) return -std::numeric_limits<double>::infinity();
  return std::log(static_cast<double>(m) / d) + static_cast<double>(m) * std::log(r / d);
}

inline bool per_disk_ok(double eps, long m, double r, double r_inner, double d) {
  return derivative_floor_holds(eps, m, r) && inner_growth_log(eps, m, r, r_inner) > std::log(3.0) &&
         cross_term_log(m, r, d) <= 0.0;
}

inline double safe_exp(double x) { return x > 709.0 ? std::numeric_limits<double>::infinity() : std::exp(x); }

}  // namespace detail

inline void validate_layout(const std::vector<LayoutDisk>& layout) {
  for (const LayoutDisk& d : layout) {
    require(d.radius > 0.0 && d.radius < 1.0, "layout radii must lie in (0, 1)");
    require(std::abs(d.center) - d.radius >= 2.0, "layout disks must lie outside D(0, 2)");
  }
  for (std::size_t k = 0; k < layout.size(); ++k) {
    for (std::size_t j = k + 1; j < layout.size(); ++j) {
      require(std::abs(layout[k].center - layout[j].center) > layout[k].radius + layout[j].radius,
              "layout disks must have disjoint closures");
    }
  }
}

// eps_k = eps_budget 2^-k, r_k' = r_k / 2, then the smallest m_k (searched
// upward) meeting the per-disk inequalities, raised further where an annulus
// exceeds its r^2/m budget.
inline DiskForestSpec choose_forest_params(const std::vector<LayoutDisk>& layout, double eps_budget) {
  require(eps_budget > 0.0 && eps_budget < 0.5, "eps budget must lie in (0, 1/2)");
  validate_layout(layout);
  const std::vector<double> clearance = layout_clearances(layout);
  DiskForestSpec spec;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    ForestDisk d;
    d.center = layout[k].center;
    d.radius = layout[k].radius;
    d.inner_radius = layout[k].radius / 2.0;
    d.clearance = clearance[k];
    d.weight = std::ldexp(eps_budget, -static_cast<int>(k + 1));
    if (d.weight == 0.0) throw ValidationError("layout too large: disk weights underflow");
    const double m_floor = std::floor(2.0 * d.radius / d.weight);
    const double m_growth = std::floor((std::log(3.0) - std::log(d.weight)) / std::log(2.0));
    long m = std::max(1L, static_cast<long>(std::min(std::max(m_floor, m_growth), 1e7)) - 1);
    while (m <= static_cast<long>(Tolerances::max_pole_order) &&
           !detail::per_disk_ok(d.weight, m, d.radius, d.inner_radius, d.clearance)) {
      ++m;
    }
    if (m > static_cast<long>(Tolerances::max_pole_order)) {
      throw ValidationError("no pole order up to 1e6 satisfies the per-disk constraints for disk " +
                            std::to_string(k + 1) + "; layout too crowded");
    }
    d.order = m;
    spec.disks.push_back(d);
  }
  // Annulus budget: raise the order with the largest r^2/m until it fits.
  std::vector<std::vector<int>> met;
  int top = 0;
  for (const ForestDisk& d : spec.disks) {
    met.push_back(annuli_met(d.center, d.radius));
    if (!met.back().empty()) top = std::max(top, met.back().back());
  }
  for (int n = 1; n <= top; ++n) {
    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < spec.disks.size(); ++k) {
      if (std::find(met[k].begin(), met[k].end(), n) != met[k].end()) members.push_back(k);
    }
    auto load = [&] {
      double s = 0.0;
      for (std::size_t k : members) s += spec.disks[k].radius * spec.disks[k].radius / static_cast<double>(spec.disks[k].order);
      return s;
    };
    while (!members.empty() && load() > Tolerances::annulus_area_budget) {
      std::size_t worst = members.front();
      for (std::size_t k : members) {
        const ForestDisk& a = spec.disks[k];
        const ForestDisk& b = spec.disks[worst];
        if (a.radius * a.radius / a.order > b.radius * b.radius / b.order) worst = k;
      }
      ForestDisk& d = spec.disks[worst];
      do {
        ++d.order;
      } while (d.order <= static_cast<long>(Tolerances::max_pole_order) &&
               !detail::per_disk_ok(d.weight, d.order, d.radius, d.inner_radius, d.clearance));
      if (d.order > static_cast<long>(Tolerances::max_pole_order)) {
        throw ValidationError("annulus budget needs a pole order above 1e6; layout too crowded");
      }
    }
  }
  return spec;
}

struct ConstraintRow {
  std::string name;
  long index = -1;  // disk (1-based) or annulus index; -1 for global rows
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
};

struct ConstraintReport {
  std::vector<ConstraintRow> rows;
  bool pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const ConstraintRow& r) { return r.pass; });
  }
  // First failing row, or nullptr.
  const ConstraintRow* first_failure() const {
    for (const ConstraintRow& r : rows) {
      if (!r.pass) return &r;
    }
    return nullptr;
  }
};

// Re-evaluates every inequality of the construction on the given parameters,
// plus the layout preconditions they rely on.
inline ConstraintReport validate_forest_params(const DiskForestSpec& spec) {
  ConstraintReport rep;
  auto add = [&](std::string name, long index, double lhs, double rhs, bool pass) {
    rep.rows.push_back({std::move(name), index, lhs, rhs, pass});
  };
  std::vector<LayoutDisk> layout;
  for (const ForestDisk& d : spec.disks) layout.push_back({d.center, d.radius});
  const std::vector<double> clearance = layout_clearances(layout);

  KahanSum weights;
  for (const ForestDisk& d : spec.disks) weights.add(d.weight);
  add("weight_sum", -1, weights.value(), 0.5, weights.value() < 0.5);

  for (std::size_t k = 0; k < spec.disks.size(); ++k) {
    const ForestDisk& d = spec.disks[k];
    const long idx = static_cast<long>(k + 1);
    add("radii_ordered", idx, d.inner_radius, d.radius, d.inner_radius > 0.0 && d.inner_radius < d.radius);
    add("radius_below_one", idx, d.radius, 1.0, d.radius < 1.0);
    add("outside_disk_two", idx, std::abs(d.center) - d.radius, 2.0, std::abs(d.center) - d.radius >= 2.0);
    add("weight_positive", idx, d.weight, 0.0, d.weight > 0.0);
    add("order_positive", idx, static_cast<double>(d.order), 1.0, d.order >= 1);
    add("clearance_exceeds_radius", idx, d.clearance, d.radius, d.clearance > d.radius);
    const bool same = (std::isinf(d.clearance) && std::isinf(clearance[k])) ||
                      std::abs(d.clearance - clearance[k]) <= 1e-12 * std::max(1.0, std::abs(clearance[k]));
    add("clearance_matches_layout", idx, d.clearance, clearance[k], same);
  }
  for (std::size_t k = 0; k < spec.disks.size(); ++k) {
    for (std::size_t j = k + 1; j < spec.disks.size(); ++j) {
      const double gap = std::abs(spec.disks[k].center - spec.disks[j].center) - spec.disks[k].radius -
                         spec.disks[j].radius;
      if (!(gap > 0.0)) add("closures_disjoint", static_cast<long>(k + 1), gap, 0.0, false);
    }
  }
  for (std::size_t k = 0; k < spec.disks.size(); ++k) {
    const ForestDisk& d = spec.disks[k];
    const long idx = static_cast<long>(k + 1);
    if (!(d.weight > 0.0 && d.order >= 1 && d.radius > 0.0 && d.inner_radius > 0.0)) continue;
    const double floor_lhs = d.weight * static_cast<double>(d.order) / d.radius;
    add("derivative_floor", idx, floor_lhs, 2.0, floor_lhs > 2.0);
    const double growth_log = detail::inner_growth_log(d.weight, d.order, d.radius, d.inner_radius);
    add("inner_disk_growth", idx, detail::safe_exp(growth_log), 3.0, growth_log > std::log(3.0));
    const double cross_log = d.clearance > 0.0 ? detail::cross_term_log(d.order, d.radius, d.clearance)
                                               : std::numeric_limits<double>::infinity();
    add("cross_term_decay", idx, detail::safe_exp(cross_log), 1.0, cross_log <= 0.0);
  }
  int top = 0;
  std::vector<std::vector<int>> met;
  for (const ForestDisk& d : spec.disks) {
    met.push_back(d.radius > 0.0 ? annuli_met(d.center, d.radius) : std::vector<int>{});
    if (!met.back().empty()) top = std::max(top, met.back().back());
  }
  for (int n = 1; n <= top; ++n) {
    KahanSum load;
    bool any = false;
    for (std::size_t k = 0; k < spec.disks.size(); ++k) {
      if (std::find(met[k].begin(), met[k].end(), n) == met[k].end()) continue;
      any = true;
      load.add(spec.disks[k].radius * spec.disks[k].radius / static_cast<double>(std::max(1L, spec.disks[k].order)));
    }
    if (any) {
      add("annulus_area_budget", n, load.value(), Tolerances::annulus_area_budget,
          load.value() <= Tolerances::annulus_area_budget);
    }
  }
  return rep;
}

inline void write_constraint_csv(const ConstraintReport& rep, std::ostream& out) {
  out << "constraint,index,lhs,rhs,pass\n";
  for (const ConstraintRow& r : rep.rows) {
    out << r.name << ',' << r.index << ',' << format_double(r.lhs) << ',' << format_double(r.rhs) << ','
        << (r.pass ? "true" : "false") << '\n';
  }
}

// Two disks of radius `radius` per dyadic annulus n = 1..annuli, centered on
// |z| = 1.5 * 2^n, the pair rotated by half a radian per annulus.
inline std::vector<LayoutDisk> default_forest_layout(int annuli = 8, int per_annulus = 2, double radius = 0.4) {
  require(annuli >= 1 && per_annulus >= 1, "layout needs at least one annulus and one disk");
  std::vector<LayoutDisk> layout;
  for (int n = 1; n <= annuli; ++n) {
    const double rho = 1.5 * std::ldexp(1.0, n);
    for (int j = 0; j < per_annulus; ++j) {
      layout.push_back({std::polar(rho, 2.0 * std::numbers::pi * j / per_annulus + 0.5 * n), radius});
    }
  }
  validate_layout(layout);
  return layout;
}

// Random layout: up to `count` disks with radii in [0.1, 0.9) placed by
// rejection in 2 < |z| < 2^(max_annulus+1), closures disjoint and outside
// D(0, 2).
inline std::vector<LayoutDisk> random_forest_layout(std::uint64_t seed, int count, int max_annulus = 5) {
  require(count >= 0 && max_annulus >= 1, "invalid random layout request");
  std::mt19937_64 rng(stream_seed(seed, 0x6c61796f7574ULL));
  std::vector<LayoutDisk> layout;
  const double outer = std::ldexp(1.0, max_annulus + 1);
  for (int attempt = 0; attempt < 200 * std::max(count, 1) && static_cast<int>(layout.size()) < count; ++attempt) {
    const double r = 0.1 + 0.8 * unit_uniform(rng());
    const double mod = 2.0 + r + (outer - 2.0 - 2.0 * r) * unit_uniform(rng());
    const complex c = std::polar(mod, 2.0 * std::numbers::pi * unit_uniform(rng()));
    bool ok = true;
    for (const LayoutDisk& d : layout) {
      if (std::abs(c - d.center) <= r + d.radius + 1e-3) {
        ok = false;
        break;
      }
    }
    if (ok) layout.push_back({c, r});
  }
  return layout;
}

inline double annulus_disk_area(const DiskForestSpec& spec, int n, std::size_t samples = 200000,
                                std::uint64_t seed = Tolerances::default_seed);

// area(A ∩ P_n) for the instantiated disks, where A is the complement of the
// disks: the annulus area minus a Monte-Carlo estimate of the covered part.
inline double gap_area(const DiskForestSpec& spec, int n, std::size_t samples = 200000,
                       std::uint64_t seed = Tolerances::default_seed) {
  const Annulus p = Annulus::dyadic(n);
  return p.area() - annulus_disk_area(spec, n, samples, seed);
}

inline double annulus_disk_area(const DiskForestSpec& spec, int n, std::size_t samples, std::uint64_t seed) {
  const Annulus p = Annulus::dyadic(n);
  double total = 0.0;
  for (const ForestDisk& d : spec.disks) {
    if (!p.meets(Disk(d.center, d.radius))) continue;
    // Fraction of the disk inside P_n, sampled.
    std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(n)));
    std::size_t inside = 0;
    for (std::size_t i = 0; i < samples; ++i) {
      const double rr = d.radius * std::sqrt(unit_uniform(rng()));
      const complex z = d.center + std::polar(rr, 2.0 * std::numbers::pi * unit_uniform(rng()));
      inside += p.contains(z);
    }
    total += std::numbers::pi * d.radius * d.radius * static_cast<double>(inside) / static_cast<double>(samples);
  }
  return total;
}

struct DichotomyReport {
  std::size_t samples_per_stratum = 0;
  std::size_t gap_violations = 0;         // z in A with |f(z)| >= 1/2
  std::size_t inner_violations = 0;       // z in an r'-disk with |f(z)| <= 2
  std::size_t derivative_violations = 0;  // z in a punctured r-disk with |f'(z)| <= 1
  double max_gap_modulus = 0.0;
  double min_inner_modulus = std::numeric_limits<double>::infinity();
  double min_derivative = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  bool pass() const { return gap_violations + inner_violations + derivative_violations == 0; }
};

namespace detail {

// Uniform point in a disk chosen with probability proportional to its area.
template <class Rng>
complex sample_in_disks(const DiskForestSpec& spec, Rng& rng, bool inner) {
  double total = 0.0;
  for (const ForestDisk& d : spec.disks) total += std::pow(inner ? d.inner_radius : d.radius, 2);
  double pick = unit_uniform(rng()) * total;
  const ForestDisk* chosen = &spec.disks.back();
  for (const ForestDisk& d : spec.disks) {
    pick -= std::pow(inner ? d.inner_radius : d.radius, 2);
    if (pick < 0.0) {
      chosen = &d;
      break;
    }
  }
  const double radius = inner ? chosen->inner_radius : chosen->radius;
  const double rr = radius * std::sqrt(unit_uniform(rng()));
  return chosen->center + std::polar(rr, 2.0 * std::numbers::pi * unit_uniform(rng()));
}

}  // namespace detail

// Three strata of `samples` points each: the gap region A inside
// D(0, extent + 1), the r'-disks, and the punctured r-disks.
inline DichotomyReport forest_dichotomy_check(const DiskForestSpec& spec, std::size_t samples,
                                              std::uint64_t seed = Tolerances::default_seed) {
  require(!spec.disks.empty(), "dichotomy check needs at least one disk");
  require(samples >= 1, "dichotomy check needs samples");
  DichotomyReport rep;
  rep.samples_per_stratum = samples;
  rep.seed = seed;
  std::mt19937_64 rng(stream_seed(seed, 1));
  const double reach = spec.extent() + 1.0;
  for (std::size_t i = 0; i < samples;) {
    const complex z = std::polar(reach * std::sqrt(unit_uniform(rng())), 2.0 * std::numbers::pi * unit_uniform(rng()));
    if (spec.containing_disk(z) >= 0) continue;
    bool on_boundary = false;
    for (const ForestDisk& d : spec.disks) on_boundary = on_boundary || std::abs(z - d.center) <= d.radius;
    if (on_boundary) continue;
    const double m = eval_forest(PlanePoint(z), spec).value.modulus();
    rep.max_gap_modulus = std::max(rep.max_gap_modulus, m);
    if (!(m < 0.5)) ++rep.gap_violations;
    ++i;
  }
  for (std::size_t i = 0; i < samples; ++i) {
    const complex z = detail::sample_in_disks(spec, rng, true);
    const EvalResult r = eval_forest(PlanePoint(z), spec);
    const double m = r.is_pole ? std::numeric_limits<double>::infinity() : r.value.modulus();
    rep.min_inner_modulus = std::min(rep.min_inner_modulus, m);
    if (!(m > 2.0)) ++rep.inner_violations;
  }
  for (std::size_t i = 0; i < samples;) {
    const complex z = detail::sample_in_disks(spec, rng, false);
    const EvalResult r = eval_forest_deriv(PlanePoint(z), spec);
    if (r.is_pole) continue;  // the center itself is excluded
    const double m = r.value.modulus();
    rep.min_derivative = std::min(rep.min_derivative, m);
    if (!(m > 1.0)) ++rep.derivative_violations;
    ++i;
  }
  return rep;
}

struct AreaProbeResult {
  int annulus = 0;
  std::size_t samples = 0;
  std::size_t persisting = 0;  // stayed in the disks or left the instantiated region
  std::size_t strict = 0;      // stayed inside instantiated disks for the whole horizon
  std::size_t exited = 0;      // counted as persisting after leaving the instantiated region
  int horizon = 0;
  std::uint64_t seed = 0;
  double fraction() const { return static_cast<double>(persisting) / static_cast<double>(samples); }
  double strict_fraction() const { return static_cast<double>(strict) / static_cast<double>(samples); }
  double standard_error() const {
    const double p = fraction();
    return std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  }
};

// Uniform samples in P_n ∩ (union of r'-disks), iterated up to `horizon`.
// A sample persists while each iterate lands in some disk D(a_j, r_j). An
// iterate beyond the instantiated annuli (|w| >= 2^(N+1), or infinity) can
// no longer be followed and counts as persisting, tallied separately; an
// iterate in the gap region A inside the instantiated range does not.
inline AreaProbeResult area_probe(const DiskForestSpec& spec, int n, std::size_t samples, int horizon,
                                  std::uint64_t seed, int jobs = default_jobs()) {
  require(samples >= 1000, "area probe needs at least 1000 samples");
  require(horizon >= 0, "horizon must be nonnegative");
  require(n >= 1, "annulus index must be positive");
  const ConstraintReport check = validate_forest_params(spec);
  if (const ConstraintRow* bad = check.first_failure()) {
    throw ValidationError("forest parameters violate " + bad->name +
                          (bad->index >= 0 ? " (index " + std::to_string(bad->index) + ")" : ""));
  }
  const Annulus p = Annulus::dyadic(n);
  DiskForestSpec local;
  for (const ForestDisk& d : spec.disks) {
    if (p.meets(Disk(d.center, d.inner_radius))) local.disks.push_back(d);
  }
  require(!local.disks.empty(), "no r'-disk meets the requested annulus");
  int top = 0;
  for (const ForestDisk& d : spec.disks) {
    const auto met = annuli_met(d.center, d.radius);
    if (!met.empty()) top = std::max(top, met.back());
  }
  const double frontier = std::ldexp(1.0, top + 1);

  AreaProbeResult res;
  res.annulus = n;
  res.samples = samples;
  res.horizon = horizon;
  res.seed = seed;
  constexpr std::size_t chunk = 1024;
  const std::size_t chunks = (samples + chunk - 1) / chunk;
  std::vector<std::size_t> persist(chunks, 0), strict(chunks, 0), exited(chunks, 0);
  parallel_for(chunks, jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      std::mt19937_64 rng(stream_seed(seed, c));
      const std::size_t count = std::min(chunk, samples - c * chunk);
      for (std::size_t i = 0; i < count; ++i) {
        complex z;
        do {
          z = detail::sample_in_disks(local, rng, true);
        } while (!p.contains(z));
        PlanePoint w(z);
        bool alive = true;
        bool left = false;
        for (int step = 0; step < horizon && alive && !left; ++step) {
          const EvalResult r = eval_forest(w, spec);
          if (r.is_pole || r.value.at_infinity() || r.value.modulus() >= frontier) {
            left = true;
            break;
          }
          w = r.value;
          if (spec.containing_disk(w.value()) < 0) alive = false;
        }
        if (alive) {
          ++persist[c];
          if (left) {
            ++exited[c];
          } else {
            ++strict[c];
          }
        }
      }
    }
  });
  for (std::size_t c = 0; c < chunks; ++c) {
    res.persisting += persist[c];
    res.strict += strict[c];
    res.exited += exited[c];
  }
  return res;
}

inline void write_probe_csv(const AreaProbeResult& r, std::ostream& out) {
  out << "annulus,samples,horizon,seed,persisting,strict,exited,fraction,strict_fraction\n";
  out << r.annulus << ',' << r.samples << ',' << r.horizon << ',' << r.seed << ',' << r.persisting << ','
      << r.strict << ',' << r.exited << ',' << format_double(r.fraction()) << ','
      << format_double(r.strict_fraction()) << '\n';
}

}  // namespace escdim
