#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "escdim/construction.hpp"
#include "oracles.hpp"

using namespace escdim;

namespace {

// mpmath, 40 digits (tests/oracle_scripts/freeze_values.py).
constexpr double kC1 = 4.9706178569352017797;
constexpr double kC1Rings = 1.60669515241529;
constexpr double kC1Spokes = 3.36392270451991;
constexpr double kC2 = 1.6066951524152917638;
constexpr double kCHalf = 13.694846760118920757;
constexpr double kC4 = 0.4210976860334237773;
constexpr double kC50 = 2.980232416405220484e-8;

// Straight re-statement of the per-disk inequalities for the oracle search.
bool all_inequalities(double eps, long m, double r, double r_inner, double d) {
  const double md = static_cast<double>(m);
  const bool f = eps * md / r > 2.0;
  const bool g = eps * std::pow(r / r_inner, md) > 3.0;
  const bool h = std::isinf(d) || (md / d) * std::pow(r / d, md) <= 1.0;
  const bool i = r * r / md <= 3.0 / 32.0;
  return f && g && h && i;
}

}  // namespace

TEST(WebConstant, MatchesHighPrecisionValues) {
  const WebConstant c1 = web_constant_parts(1.0);
  EXPECT_NEAR(c1.value(), kC1, 1e-12);
  EXPECT_NEAR(c1.ring_sum, kC1Rings, 1e-12);
  EXPECT_NEAR(c1.spoke_sum, kC1Spokes, 1e-12);
  EXPECT_LT(c1.tail_bound, 1e-12);
  EXPECT_NEAR(compute_web_constant(2.0), kC2, 1e-12);
  EXPECT_NEAR(compute_web_constant(0.5), kCHalf, 1e-11);
  EXPECT_NEAR(compute_web_constant(4.0), kC4, 1e-12);
  EXPECT_NEAR(compute_web_constant(50.0) / kC50, 1.0, 1e-12);
}

TEST(WebConstant, MatchesDirectSummation) {
  for (double mu : {0.3, 0.7, 1.0, 1.9, 3.0}) {
    EXPECT_NEAR(compute_web_constant(mu), oracle::web_constant_direct(mu), 1e-11 * compute_web_constant(mu));
  }
}

TEST(WebConstant, DecreasingAndVanishing) {
  double previous = compute_web_constant(0.2);
  for (double mu = 0.3; mu < 60.0; mu *= 1.2) {
    const double c = compute_web_constant(mu);
    EXPECT_LT(c, previous);
    previous = c;
  }
  EXPECT_LT(compute_web_constant(200.0), 1e-29);
  EXPECT_THROW(compute_web_constant(0.0), ValidationError);
}

TEST(WebSample, PointsLieOnTheWeb) {
  for (double rho : {0.5, 2.0}) {
    const WebSample w = sample_web(SeriesFunctionSpec(rho, 1), 8, 20);
    for (std::size_t i = 0; i < w.points.size(); ++i) {
      EXPECT_LE(web_membership_error(w.points[i], w.component[i], w.mu), 1e-10);
    }
    // 8 circles plus spokes for n = 2..8.
    EXPECT_EQ(w.points.size(), static_cast<std::size_t>(20 * (8 + 2 * (2 + 3 + 4 + 5 + 6 + 7 + 8))));
  }
  EXPECT_THROW(sample_web(SeriesFunctionSpec(2.0, 1), 1, 20), ValidationError);
}

TEST(WebSample, BoundHoldsForRhoTwo) {
  const WebBoundCheck c = check_web_bound(sample_web(SeriesFunctionSpec(2.0, 1), 30, 200));
  EXPECT_TRUE(c.pass());
  EXPECT_NEAR(c.bound, 4.0 * kC1 + 4.0, 1e-11);
  EXPECT_LE(c.max_modulus, c.bound);
}

TEST(WebSample, BoundHoldsForRhoHalf) {
  const WebBoundCheck c = check_web_bound(sample_web(SeriesFunctionSpec(0.5, 1), 10, 200));
  EXPECT_TRUE(c.pass());
  EXPECT_LE(c.max_modulus, 4.0 * kC4 + 4.0);
}

TEST(WorkingR0, AtLeastTwoAndScalesWithM) {
  const double r1 = estimate_working_r0(SeriesFunctionSpec(2.0, 1), 6, 16);
  const double r3 = estimate_working_r0(SeriesFunctionSpec(2.0, 3), 6, 16);
  EXPECT_GE(r1, 2.0);
  EXPECT_GE(r3, r1);
}

TEST(Mayer, EnvelopeStableAcrossRings) {
  const MayerReport rep = mayer_derivative_spotcheck(SeriesFunctionSpec(2.0, 1), 20, 10, 40);
  EXPECT_TRUE(std::isfinite(rep.empirical_k));
  EXPECT_LE(rep.k_upper_rings, 2.0 * rep.k_lower_rings);
  EXPECT_GE(rep.k_upper_rings, 0.5 * rep.k_lower_rings);
  EXPECT_NEAR(rep.slope, 0.0, 0.2);
  EXPECT_LE(rep.web_ratio, rep.empirical_k);
}

TEST(Mayer, SlopeTracksOrder) {
  for (double rho : {1.0, 4.0}) {
    const MayerReport rep = mayer_derivative_spotcheck(SeriesFunctionSpec(rho, 1), 20, 10, 40);
    EXPECT_NEAR(rep.slope, rho / 2.0 - 1.0, 0.2) << "rho=" << rho;
  }
  EXPECT_THROW(mayer_derivative_spotcheck(SeriesFunctionSpec(2.0, 1), 5), ValidationError);
}

TEST(Chooser, SingleDiskMatchesExhaustiveSearch) {
  const DiskForestSpec spec = choose_forest_params({{complex(5.0, 0.0), 0.5}}, 0.25);
  ASSERT_EQ(spec.disks.size(), 1u);
  const ForestDisk& d = spec.disks[0];
  EXPECT_EQ(d.weight, 0.125);
  EXPECT_EQ(d.inner_radius, 0.25);
  long oracle_m = -1;
  for (long m = 1; m <= 64 && oracle_m < 0; ++m) {
    if (all_inequalities(0.125, m, 0.5, 0.25, d.clearance)) oracle_m = m;
  }
  EXPECT_EQ(d.order, oracle_m);
  EXPECT_EQ(d.order, 9);
  EXPECT_TRUE(validate_forest_params(spec).pass());
}

TEST(Chooser, FourDiskLayoutPasses) {
  const std::vector<LayoutDisk> layout = {
      {complex(5.0, 0.0), 0.4}, {complex(0.0, 7.0), 0.4}, {complex(-10.0, 0.0), 0.4}, {complex(0.0, -14.0), 0.4}};
  for (double d : layout_clearances(layout)) EXPECT_GE(d, 2.0);
  const DiskForestSpec spec = choose_forest_params(layout, 0.25);
  EXPECT_TRUE(validate_forest_params(spec).pass());
}

TEST(Chooser, EmptyLayoutIsValid) {
  const DiskForestSpec spec = choose_forest_params({}, 0.25);
  EXPECT_TRUE(spec.disks.empty());
  EXPECT_TRUE(validate_forest_params(spec).pass());
}

TEST(Chooser, MinimalOrdersOnRandomLayouts) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto layout = random_forest_layout(seed, 12);
    const DiskForestSpec spec = choose_forest_params(layout, 0.3);
    const ConstraintReport rep = validate_forest_params(spec);
    ASSERT_TRUE(rep.pass()) << "seed " << seed << " fails " << rep.first_failure()->name;
    // Oracle: smallest m meeting the per-disk inequalities, by linear search.
    std::vector<long> minimal;
    for (const ForestDisk& d : spec.disks) {
      long m = 1;
      for (;; ++m) {
        const double md = static_cast<double>(m);
        const bool per_disk =
            d.weight * md / d.radius > 2.0 && d.weight * std::pow(d.radius / d.inner_radius, md) > 3.0 &&
            (std::isinf(d.clearance) || (md / d.clearance) * std::pow(d.radius / d.clearance, md) <= 1.0);
        if (per_disk) break;
      }
      minimal.push_back(m);
    }
    // Annuli whose load at the minimal orders fits the budget are never
    // touched, so disks lying only in such annuli keep their minimal order.
    for (std::size_t k = 0; k < spec.disks.size(); ++k) {
      EXPECT_GE(spec.disks[k].order, minimal[k]);
      bool untouched = true;
      for (int n : annuli_met(spec.disks[k].center, spec.disks[k].radius)) {
        double load = 0.0;
        for (std::size_t j = 0; j < spec.disks.size(); ++j) {
          const auto met = annuli_met(spec.disks[j].center, spec.disks[j].radius);
          if (std::find(met.begin(), met.end(), n) != met.end()) {
            load += spec.disks[j].radius * spec.disks[j].radius / static_cast<double>(minimal[j]);
          }
        }
        untouched = untouched && load <= 3.0 / 32.0;
      }
      if (untouched) {
        EXPECT_EQ(spec.disks[k].order, minimal[k]) << "seed " << seed << " disk " << k;
      }
    }
  }
}

TEST(Chooser, RejectsBadLayouts) {
  EXPECT_THROW(choose_forest_params({{complex(2.5, 0.0), 0.8}}, 0.25), ValidationError);
  EXPECT_THROW(choose_forest_params({{complex(5.0, 0.0), 0.5}, {complex(5.9, 0.0), 0.5}}, 0.25), ValidationError);
  EXPECT_THROW(choose_forest_params({{complex(5.0, 0.0), 1.5}}, 0.25), ValidationError);
  EXPECT_THROW(choose_forest_params({{complex(5.0, 0.0), 0.5}}, 0.5), ValidationError);
}

TEST(Validator, ForcedViolations) {
  DiskForestSpec spec = choose_forest_params({{complex(5.0, 0.0), 0.5}}, 0.25);
  spec.disks[0].weight = 0.6;
  const ConstraintReport heavy = validate_forest_params(spec);
  EXPECT_FALSE(heavy.pass());
  EXPECT_EQ(heavy.first_failure()->name, "weight_sum");
  EXPECT_GT(heavy.first_failure()->lhs, 0.5);

  DiskForestSpec tight = choose_forest_params({{complex(5.0, 0.0), 0.5}, {complex(-5.0, 0.0), 0.5}}, 0.25);
  tight.disks[0].order = 1;
  tight.disks[0].radius = 0.9;
  tight.disks[0].clearance = 0.9;
  const ConstraintReport rep = validate_forest_params(tight);
  EXPECT_FALSE(rep.pass());
  bool breach = false;
  for (const ConstraintRow& r : rep.rows) breach = breach || (r.name == "clearance_exceeds_radius" && !r.pass);
  EXPECT_TRUE(breach);

  std::ostringstream csv;
  write_constraint_csv(rep, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "constraint,index,lhs,rhs,pass");
}

TEST(Dichotomy, DefaultLayout) {
  const DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  const DichotomyReport rep = forest_dichotomy_check(spec, 10000, 7);
  EXPECT_TRUE(rep.pass());
  EXPECT_LT(rep.max_gap_modulus, 0.5);
  EXPECT_GT(rep.min_inner_modulus, 2.0);
  EXPECT_GT(rep.min_derivative, 1.0);
}

TEST(Dichotomy, RandomLayouts) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const DiskForestSpec spec = choose_forest_params(random_forest_layout(seed, 10), 0.3);
    EXPECT_TRUE(forest_dichotomy_check(spec, 2000, seed).pass()) << "seed " << seed;
  }
}

TEST(GapArea, ReportedForDefaultLayout) {
  const DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  for (int n = 1; n <= 8; ++n) {
    const double gap = gap_area(spec, n);
    EXPECT_GT(gap, 0.0);
    EXPECT_LE(gap, Annulus::dyadic(n).area());
  }
}

TEST(AreaProbe, HorizonZeroIsVacuous) {
  const DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  const AreaProbeResult r = area_probe(spec, 3, 2000, 0, 11);
  EXPECT_EQ(r.persisting, r.samples);
  EXPECT_EQ(r.fraction(), 1.0);
}

TEST(AreaProbe, HorizonOnePositiveAndSeedsAgree) {
  const DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  const AreaProbeResult a = area_probe(spec, 3, 20000, 1, 101);
  const AreaProbeResult b = area_probe(spec, 3, 20000, 1, 202);
  EXPECT_GT(a.fraction(), 0.0);
  const double se = std::sqrt(a.standard_error() * a.standard_error() + b.standard_error() * b.standard_error());
  EXPECT_LE(std::abs(a.fraction() - b.fraction()), 3.0 * se);
  EXPECT_EQ(a.persisting, a.strict + a.exited);
}

TEST(AreaProbe, DoublingSamplesStaysWithinBinomialError) {
  const DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  const AreaProbeResult a = area_probe(spec, 4, 10000, 5, 5);
  const AreaProbeResult b = area_probe(spec, 4, 20000, 5, 5);
  const double p = a.fraction();
  EXPECT_LT(std::abs(a.fraction() - b.fraction()), 3.0 * std::sqrt(p * (1.0 - p) / 10000.0) + 1e-12);
}

TEST(AreaProbe, DeterministicAcrossJobCounts) {
  const DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  const AreaProbeResult a = area_probe(spec, 2, 5000, 5, 9, 1);
  const AreaProbeResult b = area_probe(spec, 2, 5000, 5, 9, 8);
  EXPECT_EQ(a.persisting, b.persisting);
  EXPECT_EQ(a.strict, b.strict);
}

TEST(AreaProbe, InvalidSpecNamesConstraint) {
  DiskForestSpec spec = choose_forest_params(default_forest_layout(), 0.25);
  spec.disks[0].order = 1;
  try {
    area_probe(spec, 1, 2000, 1, 1);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("derivative_floor"), std::string::npos) << e.what();
  }
  EXPECT_THROW(area_probe(spec, 1, 10, 1, 1), ValidationError);
}
