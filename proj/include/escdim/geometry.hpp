#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "escdim/errors.hpp"

namespace escdim {

using complex = std::complex<double>;

// A point of the Riemann sphere: a finite complex number or infinity.
// Anything that is not finite (overflowed or NaN arithmetic) collapses to the
// point at infinity; pole hits are an ordinary outcome, not an error.
class PlanePoint {
 public:
  constexpr PlanePoint() = default;
  PlanePoint(double re, double im) : PlanePoint(complex(re, im)) {}
  PlanePoint(complex z) {  // NOLINT(google-explicit-constructor)
    if (std::isfinite(z.real()) && std::isfinite(z.imag())) {
      value_ = z;
    } else {
      at_infinity_ = true;
    }
  }

  static PlanePoint infinity() {
    PlanePoint p;
    p.at_infinity_ = true;
    return p;
  }

  static PlanePoint from_polar(double modulus, double angle) {
    return PlanePoint(std::polar(modulus, angle));
  }

  bool at_infinity() const noexcept { return at_infinity_; }
  bool finite() const noexcept { return !at_infinity_; }

  // Callers must check finite() first; infinity has no coordinates.
  complex value() const {
    if (at_infinity_) throw NumericalError("coordinates requested for the point at infinity");
    return value_;
  }
  double re() const { return value().real(); }
  double im() const { return value().imag(); }

  double modulus() const noexcept {
    return at_infinity_ ? std::numeric_limits<double>::infinity() : std::abs(value_);
  }
  double arg() const { return std::arg(value()); }

  PlanePoint conj() const { return at_infinity_ ? *this : PlanePoint(std::conj(value_)); }

  friend bool operator==(const PlanePoint& a, const PlanePoint& b) {
    if (a.at_infinity_ || b.at_infinity_) return a.at_infinity_ == b.at_infinity_;
    return a.value_ == b.value_;
  }

 private:
  complex value_{0.0, 0.0};
  bool at_infinity_ = false;
};

// Open disk D(center, radius).
struct Disk {
  complex center;
  double radius;

  Disk(complex c, double r) : center(c), radius(r) {
    require(std::isfinite(c.real()) && std::isfinite(c.imag()), "disk center must be finite");
    require(r > 0.0 && std::isfinite(r), "disk radius must be positive and finite");
  }

  bool contains(complex z) const { return std::abs(z - center) < radius; }
  bool contains(const PlanePoint& z) const { return z.finite() && contains(z.value()); }
  bool closure_contains(complex z) const { return std::abs(z - center) <= radius; }
  double area() const { return std::numbers::pi * radius * radius; }
};

// {z : inner <= |z| < outer}; outer may be +inf, which gives B(inner) minus
// its boundary circle.
struct Annulus {
  double inner_radius;
  double outer_radius;

  Annulus(double inner, double outer) : inner_radius(inner), outer_radius(outer) {
    require(inner > 0.0, "annulus inner radius must be positive");
    require(inner < outer, "annulus inner radius must be below the outer radius");
  }

  // P_n = {2^n <= |z| < 2^(n+1)}.
  static Annulus dyadic(int n) { return Annulus(std::ldexp(1.0, n), std::ldexp(1.0, n + 1)); }
  static Annulus exterior(double radius) {
    return Annulus(radius, std::numeric_limits<double>::infinity());
  }

  bool contains(complex z) const {
    const double m = std::abs(z);
    return m >= inner_radius && m < outer_radius;
  }
  bool contains(const PlanePoint& z) const {
    if (z.at_infinity()) return std::isinf(outer_radius);
    return contains(z.value());
  }
  double area() const {
    return std::numbers::pi * (outer_radius * outer_radius - inner_radius * inner_radius);
  }
  // Whether the open disk meets this annulus.
  bool meets(const Disk& d) const {
    const double c = std::abs(d.center);
    const double lo = std::max(0.0, c - d.radius);
    const double hi = c + d.radius;
    return lo < outer_radius && hi > inner_radius;
  }
};

// Axis-aligned rectangle [x0, x0 + width) x [y0, y0 + height).
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double width = 1.0;
  double height = 1.0;

  bool contains(complex z) const {
    return z.real() >= x0 && z.real() <= x0 + width && z.imag() >= y0 && z.imag() <= y0 + height;
  }
  void validate() const {
    require(std::isfinite(x0) && std::isfinite(y0), "rectangle corner must be finite");
    require(width > 0.0 && height > 0.0, "rectangle sides must be positive");
  }
};

// Chordal distance on the Riemann sphere,
// chi(z1, z2) = 2|z1 - z2| / (sqrt(1+|z1|^2) sqrt(1+|z2|^2)), with the limit
// 2 / sqrt(1+|z|^2) against infinity.
inline double spherical_distance(const PlanePoint& a, const PlanePoint& b) {
  if (a.at_infinity() && b.at_infinity()) return 0.0;
  if (a.at_infinity() || b.at_infinity()) {
    const double m = a.at_infinity() ? b.modulus() : a.modulus();
    return 2.0 / std::hypot(1.0, m);
  }
  const complex z1 = a.value();
  const complex z2 = b.value();
  return 2.0 * std::abs(z1 - z2) / (std::hypot(1.0, std::abs(z1)) * std::hypot(1.0, std::abs(z2)));
}

// Factor 8 / |a|^(1 + 1/M) that turns a Euclidean diameter of a set inside
// D(a, |a|/2) into an upper bound for its spherical diameter.
inline double spherical_diameter_factor(double a_modulus, int multiplicity) {
  require(multiplicity >= 1, "multiplicity must be a positive integer");
  require(a_modulus >= 1.0, "pole modulus must be at least 1");
  return 8.0 / std::pow(a_modulus, 1.0 + 1.0 / multiplicity);
}

// Distortion constants for a univalent map on D(a, r), evaluated at points of
// D(a, lambda r).
struct KoebeConstants {
  double lambda;
  double offset_lower;  // lambda / (1+lambda)^2
  double offset_upper;  // lambda / (1-lambda)^2
  double deriv_lower;   // (1-lambda) / (1+lambda)^3
  double deriv_upper;   // (1+lambda) / (1-lambda)^3

  // Worst-case ratio |g'(u)| / |g'(v)| bound, ((1-lambda)/(1+lambda))^4.
  double distortion_ratio() const { return deriv_lower / deriv_upper; }
};

inline KoebeConstants koebe_constants(double lambda) {
  require(lambda > 0.0 && lambda < 1.0, "koebe lambda must lie in (0, 1)");
  const double p = 1.0 + lambda;
  const double m = 1.0 - lambda;
  return KoebeConstants{lambda, lambda / (p * p), lambda / (m * m), m / (p * p * p),
                        p / (m * m * m)};
}

}  // namespace escdim
