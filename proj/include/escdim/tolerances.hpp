#pragma once

#include <cstddef>
#include <cstdint>

namespace escdim {

// Every numerical tolerance and default used by the library lives here.
struct Tolerances {
  // A point is a pole hit when |z - u| < pole_relative * max(1, |u|).
  static constexpr double pole_relative = 1e-12;
  // Within near_pole_zone * k^(mu-1) of a pole u_{k,l} the ring term is split
  // into its principal part and a regular remainder.
  static constexpr double near_pole_zone = 0.1;
  // Series terms whose modulus is provably below this are skipped; the
  // skipped mass is added to the reported truncation bound.
  static constexpr double skipped_term = 1e-22;
  static constexpr int default_truncation_margin = 8;
  static constexpr int min_truncation_margin = 4;

  // Orbit moduli above this are treated as having reached infinity.
  static constexpr double overflow_modulus = 1e300;
  static constexpr int default_horizon = 50;

  // Largest exponent handed to exp() before a value is declared infinite.
  static constexpr double max_log_modulus = 690.0;

  // Pole atlas sizing.
  static constexpr std::size_t atlas_entry_cap = 5'000'000;
  static constexpr std::size_t min_threshold_entries = 10'000;
  static constexpr long default_atlas_rings = 1000;
  // Ring-aggregated cover sums store one term per ring.
  static constexpr long max_cover_rings = 50'000'000;

  // Threshold search on the cover sum.
  static constexpr double threshold_lo = 0.01;
  static constexpr double threshold_hi = 2.0;
  static constexpr int threshold_bisections = 30;
  static constexpr int threshold_scan_points = 40;
  static constexpr double convergence_slope = 0.0;

  // Packing check constant used with the construction's working radius.
  static constexpr double packing_radius = 16.0;

  // Disk-forest chooser.
  static constexpr long max_pole_order = 1'000'000;
  static constexpr double annulus_area_budget = 3.0 / 32.0;

  // Web constant series are summed until the geometric tail is below this.
  static constexpr double web_constant_tail = 1e-13;

  static constexpr std::uint64_t default_seed = 20240607ULL;
};

}  // namespace escdim
