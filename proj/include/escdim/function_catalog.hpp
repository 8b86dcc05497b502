#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "escdim/errors.hpp"
#include "escdim/geometry.hpp"
#include "escdim/tolerances.hpp"

namespace escdim {

// g(z) = 2 sum_k k^(mu k) z^k / (z^(2k) - k^(2 mu k)) with mu = 2/rho, and
// f = g^M.
struct SeriesFunctionSpec {
  double rho = 2.0;
  int M = 1;
  double mu = 1.0;
  int truncation_margin = Tolerances::default_truncation_margin;

  SeriesFunctionSpec() = default;
  SeriesFunctionSpec(double rho_, int M_, int margin = Tolerances::default_truncation_margin)
      : rho(rho_), M(M_), mu(2.0 / rho_), truncation_margin(margin) {
    require(rho_ > 0.0 && std::isfinite(rho_), "rho must be positive");
    require(M_ >= 1, "M must be a positive integer");
    require(margin >= Tolerances::min_truncation_margin, "truncation margin must be at least 4");
  }
};

// One term eps * (r / (z - a))^m of the disk-forest function.
struct ForestDisk {
  complex center;
  double radius = 0.0;        // r_k
  double inner_radius = 0.0;  // r_k'
  double clearance = 0.0;     // d_k, +inf for a lone disk
  double weight = 0.0;        // eps_k
  long order = 1;             // m_k
};

struct DiskForestSpec {
  std::vector<ForestDisk> disks;

  // Index of the disk D(a_k, r_k) containing z, or -1.
  int containing_disk(complex z) const {
    for (std::size_t k = 0; k < disks.size(); ++k) {
      if (std::abs(z - disks[k].center) < disks[k].radius) return static_cast<int>(k);
    }
    return -1;
  }
  int containing_inner_disk(complex z) const {
    for (std::size_t k = 0; k < disks.size(); ++k) {
      if (std::abs(z - disks[k].center) < disks[k].inner_radius) return static_cast<int>(k);
    }
    return -1;
  }
  // Radius of the smallest origin-centred disk holding every forest disk.
  double extent() const {
    double e = 0.0;
    for (const auto& d : disks) e = std::max(e, std::abs(d.center) + d.radius);
    return e;
  }
};

// p(z) / q(z) with coefficients in ascending powers; used as small test maps.
struct RationalSpec {
  std::vector<complex> numerator;
  std::vector<complex> denominator;

  static RationalSpec polynomial(std::vector<complex> coeffs) { return {std::move(coeffs), {1.0}}; }
  // z -> c / z^n
  static RationalSpec inverse_power(complex c, int n) {
    std::vector<complex> den(static_cast<std::size_t>(n) + 1, 0.0);
    den.back() = 1.0;
    return {{c}, std::move(den)};
  }
};

using FunctionSpec = std::variant<SeriesFunctionSpec, DiskForestSpec, RationalSpec>;

struct EvalResult {
  PlanePoint value;
  double truncation_bound = 0.0;
  bool is_pole = false;

  static EvalResult pole() { return {PlanePoint::infinity(), 0.0, true}; }
};

namespace detail {

// Neumaier-compensated accumulation of complex terms.
class CompensatedSum {
 public:
  void add(complex x) {
    add_part(re_, re_c_, x.real());
    add_part(im_, im_c_, x.imag());
  }
  complex value() const { return {re_ + re_c_, im_ + im_c_}; }

 private:
  static void add_part(double& s, double& c, double x) {
    const double t = s + x;
    if (std::abs(s) >= std::abs(x)) {
      c += (s - t) + x;
    } else {
      c += (x - t) + s;
    }
    s = t;
  }
  double re_ = 0.0, re_c_ = 0.0, im_ = 0.0, im_c_ = 0.0;
};

// e - log(1+e) without cancellation for small e.
inline complex e_minus_log1p(complex e) {
  if (std::abs(e) >= 0.1) return e - std::log(1.0 + e);
  complex power = e * e;
  complex sum = 0.0;
  for (int n = 2; n <= 22; ++n) {
    sum += (n % 2 == 0 ? 1.0 : -1.0) * power / static_cast<double>(n);
    power *= e;
  }
  return sum;
}

// 1/sinh(x) - 1/x.
inline complex csch_minus_reciprocal(complex x) {
  if (std::abs(x) >= 0.2) return 1.0 / std::sinh(x) - 1.0 / x;
  const complex x2 = x * x;
  return x * (-1.0 / 6.0 +
              x2 * (7.0 / 360.0 +
                    x2 * (-31.0 / 15120.0 + x2 * (127.0 / 604800.0 + x2 * (-73.0 / 3421440.0)))));
}

}  // namespace detail

namespace detail {

// pi * phase / k with phase reduced to (-k, k], so that conjugate slots get
// exactly negated angles.
inline double half_turn_angle(std::int64_t phase, long k) {
  const std::int64_t two_k = 2 * static_cast<std::int64_t>(k);
  phase %= two_k;
  if (phase < 0) phase += two_k;
  if (phase > k) phase -= two_k;
  return std::numbers::pi * static_cast<double>(phase) / static_cast<double>(k);
}

}  // namespace detail

// k^mu e^(i pi l / k)
inline complex pole_location(long k, long l, double mu) {
  return std::polar(std::pow(static_cast<double>(k), mu), detail::half_turn_angle(l, k));
}

// k^(mu-1) e^(i pi l (1-k) / k), the residue of g at pole_location(k, l).
inline complex pole_residue(long k, long l, double mu) {
  const std::int64_t phase = static_cast<std::int64_t>(l) * (1 - static_cast<std::int64_t>(k));
  return std::polar(std::pow(static_cast<double>(k), mu - 1.0), detail::half_turn_angle(phase, k));
}

// Number of series terms K = max(1, ceil((2|z|)^(1/mu))) + margin. The
// remainder after K terms is bounded by series_tail_bound(K).
inline long tail_cutoff(double z_modulus, double mu, int margin) {
  require(z_modulus >= 0.0, "modulus must be nonnegative");
  require(mu > 0.0, "mu must be positive");
  require(margin >= 1, "margin must be positive");
  const double base = std::ceil(std::pow(2.0 * z_modulus, 1.0 / mu));
  if (!(base < 1e15)) throw NumericalError("modulus beyond the series evaluation range");
  return std::max(1L, static_cast<long>(base)) + margin;
}

// 2 * 2^(2-K): twice the geometric tail of the terms past the cutoff.
inline double series_tail_bound(long cutoff) { return std::ldexp(1.0, static_cast<int>(3 - std::min(cutoff, 2000L))); }

namespace detail {

struct RingProbe {
  bool near_pole = false;
  bool pole = false;
  long slot = 0;
  complex location;
};

// Locates the pole of ring k nearest to z when z sits in the split zone.
inline RingProbe probe_ring(complex z, double az, long k, double mu) {
  RingProbe probe;
  const double kmu = std::pow(static_cast<double>(k), mu);
  const double zone = Tolerances::near_pole_zone * kmu / static_cast<double>(k);
  if (std::abs(az - kmu) >= zone) return probe;
  const long two_k = 2 * k;
  long l = std::lround(std::arg(z) * static_cast<double>(k) / std::numbers::pi) % two_k;
  if (l < 0) l += two_k;
  const complex u = pole_location(k, l, mu);
  const double dist = std::abs(z - u);
  probe.slot = l;
  probe.location = u;
  probe.pole = dist < Tolerances::pole_relative * std::max(1.0, kmu);
  probe.near_pole = dist < zone;
  return probe;
}

// The k-th term 2 w^k / (w^(2k) - 1), w = z / k^mu, computed through the
// smaller of w^k and w^-k.
inline complex ring_term_direct(double log_az, double arg_z, long k, double mu) {
  const double kd = static_cast<double>(k);
  const double lw = log_az - mu * std::log(kd);
  if (lw > 0.0) {
    const complex x = std::polar(std::exp(-kd * lw), -kd * arg_z);
    return 2.0 * x / (1.0 - x * x);
  }
  const complex x = std::polar(std::exp(kd * lw), kd * arg_z);
  return -2.0 * x / (1.0 - x * x);
}

// The same term near u_{k,l}, as v/(z-u) plus a regular remainder.
inline complex ring_term_split(complex z, long k, const RingProbe& probe) {
  const complex e = (z - probe.location) / probe.location;
  const double kd = static_cast<double>(k);
  const complex em = e_minus_log1p(e);
  const complex log_zeta = e - em;
  const complex remainder = csch_minus_reciprocal(kd * log_zeta) + em / (kd * e * log_zeta);
  const double sign = (probe.slot % 2 == 0) ? 1.0 : -1.0;
  return sign * (1.0 / (kd * e) + remainder);
}

inline complex ring_term_derivative(complex z, double log_az, double arg_z, long k, double mu) {
  const double kd = static_cast<double>(k);
  const double lw = log_az - mu * std::log(kd);
  if (lw > 0.0) {
    const complex q = std::polar(std::exp(-kd * lw), -kd * arg_z);
    const complex one_minus = 1.0 - q * q;
    return -2.0 * kd * q * (1.0 + q * q) / (one_minus * one_minus * z);
  }
  // p / z = w^(k-1) / k^mu keeps z = 0 well defined.
  const complex p = std::polar(std::exp(kd * lw), kd * arg_z);
  const complex p_over_z =
      std::polar(std::exp((kd - 1.0) * lw - mu * std::log(kd)), (kd - 1.0) * arg_z);
  const complex one_minus = 1.0 - p * p;
  return -2.0 * kd * p_over_z * (1.0 + p * p) / (one_minus * one_minus);
}

inline complex ring_derivative_partial_fractions(complex z, long k, double mu) {
  CompensatedSum sum;
  for (long l = 0; l < 2 * k; ++l) {
    const complex d = z - pole_location(k, l, mu);
    sum.add(-pole_residue(k, l, mu) / (d * d));
  }
  return sum.value();
}

}  // namespace detail

// g at a finite point: every term above the skip level is summed; the bound
// covers the remainder past tail_cutoff and the skipped terms below it.
inline EvalResult eval_g(const PlanePoint& point, const SeriesFunctionSpec& spec) {
  if (point.at_infinity()) throw ValidationError("series evaluation needs a finite point");
  const complex z = point.value();
  const double az = std::abs(z);
  const double mu = spec.mu;
  const long cutoff = tail_cutoff(az, mu, spec.truncation_margin);
  if (az == 0.0) return {PlanePoint(0.0, 0.0), series_tail_bound(cutoff), false};

  const double log_az = std::log(az);
  const double arg_z = std::arg(z);
  const double skip_log = -std::log(Tolerances::skipped_term);
  const double k_unit = std::exp(log_az / mu);  // |z|^(1/mu), where |w| = 1
  // k |log|w|| decides whether term k can matter; it rises then falls below
  // k_unit and rises past it.
  auto decay = [&](long k) {
    const double kd = static_cast<double>(k);
    return kd * std::abs(log_az - mu * std::log(kd));
  };

  detail::CompensatedSum sum;
  long summed = 0;
  bool pole = false;
  auto add_ring = [&](long k) {
    const detail::RingProbe probe = detail::probe_ring(z, az, k, mu);
    if (probe.pole) {
      pole = true;
      return;
    }
    sum.add(probe.near_pole ? detail::ring_term_split(z, k, probe)
                            : detail::ring_term_direct(log_az, arg_z, k, mu));
    ++summed;
  };

  long k = 1;
  for (; k <= cutoff && static_cast<double>(k) < k_unit && decay(k) <= skip_log; ++k) add_ring(k);
  const long low_end = k;
  long high_start = low_end;
  if (low_end <= cutoff && static_cast<double>(low_end) < k_unit) {
    // Skipped gap; sum the significant terms just below k_unit.
    const long below = std::min(cutoff, static_cast<long>(std::ceil(k_unit)) - 1);
    for (long j = below; j >= low_end && decay(j) <= skip_log; --j) add_ring(j);
    high_start = std::max(low_end, below + 1);
  }
  // The upward run continues past the cutoff while terms stay significant;
  // the cutoff only fixes the reported bound.
  for (k = high_start;; ++k) {
    if (static_cast<double>(k) >= k_unit && decay(k) > skip_log) break;
    if (k > cutoff && static_cast<double>(k) >= k_unit && k > 2 * cutoff + 64) break;
    add_ring(k);
    if (k > cutoff) --summed;
  }
  if (pole) return EvalResult::pole();

  const double skipped = static_cast<double>(cutoff - summed);
  const double bound = series_tail_bound(cutoff) + skipped * 2.000001 * Tolerances::skipped_term;
  return {PlanePoint(sum.value()), bound, false};
}

// f = g^M; the tail bound is propagated to first order.
inline EvalResult eval_f(const PlanePoint& point, const SeriesFunctionSpec& spec) {
  const EvalResult g = eval_g(point, spec);
  if (g.is_pole) return g;
  if (spec.M == 1) return g;
  const complex gv = g.value.value();
  const PlanePoint value(std::pow(gv, spec.M));
  const double bound =
      static_cast<double>(spec.M) * std::pow(std::abs(gv), spec.M - 1) * g.truncation_bound;
  return {value, bound, false};
}

// g' by term-wise differentiation with the same cutoff as eval_g. Rings whose
// pole is close to z use partial fractions.
inline EvalResult eval_g_deriv(const PlanePoint& point, const SeriesFunctionSpec& spec) {
  if (point.at_infinity()) throw ValidationError("series evaluation needs a finite point");
  const complex z = point.value();
  const double az = std::abs(z);
  const double mu = spec.mu;
  const long cutoff = tail_cutoff(az, mu, spec.truncation_margin);
  const double log_az = az > 0.0 ? std::log(az) : -std::numeric_limits<double>::infinity();
  const double arg_z = az > 0.0 ? std::arg(z) : 0.0;

  detail::CompensatedSum sum;
  const double k_unit = az > 0.0 ? std::exp(log_az / mu) : 0.0;
  for (long k = 1;; ++k) {
    if (k > cutoff) {
      // Keep going while the terms past the cutoff are still significant.
      if (az == 0.0 || static_cast<double>(k) < k_unit) break;
      const double kd = static_cast<double>(k);
      const double log_term = std::log(2.0 * kd / az) - kd * (mu * std::log(kd) - log_az);
      if (log_term < std::log(Tolerances::skipped_term) + std::log(std::max(1.0, std::abs(sum.value())))) break;
    }
    if (az == 0.0) {
      // Only the linear term survives at the origin.
      if (k == 1) sum.add(-2.0);
      continue;
    }
    const detail::RingProbe probe = detail::probe_ring(z, az, k, mu);
    if (probe.pole) throw NumericalError("derivative requested at a pole");
    sum.add(probe.near_pole ? detail::ring_derivative_partial_fractions(z, k, mu)
                            : detail::ring_term_derivative(z, log_az, arg_z, k, mu));
  }
  const double kd = static_cast<double>(cutoff);
  const double bound = 8.9 * (kd + 2.0) * std::ldexp(1.0, -static_cast<int>(std::min(cutoff, 2000L)));
  return {PlanePoint(sum.value()), bound, false};
}

// f' = M g^(M-1) g'.
inline EvalResult eval_f_deriv(const PlanePoint& point, const SeriesFunctionSpec& spec) {
  const EvalResult dg = eval_g_deriv(point, spec);
  if (spec.M == 1) return dg;
  const EvalResult g = eval_g(point, spec);
  const complex gv = g.value.value();
  const complex value = static_cast<double>(spec.M) * std::pow(gv, spec.M - 1) * dg.value.value();
  return {PlanePoint(value), dg.truncation_bound * spec.M * std::pow(std::abs(gv), spec.M - 1), false};
}

namespace detail {

// eps (r / (z - a))^m for m possibly in the millions, via logarithms.
inline complex forest_term(const ForestDisk& d, complex offset, bool derivative, bool& overflow) {
  const double dist = std::abs(offset);
  const double m = static_cast<double>(d.order);
  double log_mod = std::log(d.weight) + m * (std::log(d.radius) - std::log(dist));
  double angle = -m * std::arg(offset);
  if (derivative) {
    log_mod += std::log(m) - std::log(dist);
    angle -= std::arg(offset);
  }
  if (log_mod > Tolerances::max_log_modulus) {
    overflow = true;
    return 0.0;
  }
  if (log_mod < -745.0) return 0.0;
  const complex t = std::polar(std::exp(log_mod), angle);
  return derivative ? -t : t;
}

inline EvalResult eval_forest_impl(const PlanePoint& point, const DiskForestSpec& spec, bool derivative) {
  if (point.at_infinity()) throw ValidationError("forest evaluation needs a finite point");
  const complex z = point.value();
  CompensatedSum sum;
  bool overflow = false;
  for (const ForestDisk& d : spec.disks) {
    const complex offset = z - d.center;
    if (std::abs(offset) < Tolerances::pole_relative * std::max(1.0, std::abs(d.center))) {
      return EvalResult::pole();
    }
    sum.add(forest_term(d, offset, derivative, overflow));
  }
  if (overflow) return {PlanePoint::infinity(), 0.0, false};
  return {PlanePoint(sum.value()), 0.0, false};
}

}  // namespace detail

// f(z) = sum_k eps_k (r_k / (z - a_k))^(m_k) over the finite disk list.
inline EvalResult eval_forest(const PlanePoint& point, const DiskForestSpec& spec) {
  return detail::eval_forest_impl(point, spec, false);
}

inline EvalResult eval_forest_deriv(const PlanePoint& point, const DiskForestSpec& spec) {
  return detail::eval_forest_impl(point, spec, true);
}

inline EvalResult eval_rational(const PlanePoint& point, const RationalSpec& spec) {
  if (point.at_infinity()) throw ValidationError("rational evaluation needs a finite point");
  const complex z = point.value();
  auto horner = [&](const std::vector<complex>& c) {
    complex acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
    return acc;
  };
  const complex den = horner(spec.denominator);
  if (den == complex(0.0, 0.0)) return EvalResult::pole();
  const PlanePoint value(horner(spec.numerator) / den);
  if (value.at_infinity()) return EvalResult::pole();
  return {value, 0.0, false};
}

inline EvalResult evaluate(const FunctionSpec& spec, const PlanePoint& z) {
  return std::visit(
      [&](const auto& s) -> EvalResult {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SeriesFunctionSpec>) {
          return eval_f(z, s);
        } else if constexpr (std::is_same_v<T, DiskForestSpec>) {
          return eval_forest(z, s);
        } else {
          return eval_rational(z, s);
        }
      },
      spec);
}

}  // namespace escdim
