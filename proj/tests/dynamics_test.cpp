#include <gtest/gtest.h>

#include <sstream>

#include "escdim/construction.hpp"
#include "escdim/dynamics.hpp"

using namespace escdim;

namespace {

FunctionSpec forest() { return choose_forest_params(default_forest_layout(), 0.25); }

const GridSpec kSquare{{-5.0, -5.0, 10.0, 10.0}, 60, 60};

}  // namespace

TEST(IterateOrbit, ForestOriginReturnsAtFirstStep) {
  const OrbitRecord rec = iterate_orbit(forest(), PlanePoint(0.0, 0.0), 2.0, 50);
  EXPECT_EQ(rec.classification, Classification::returned);
  EXPECT_EQ(rec.steps_taken, 1);
  EXPECT_LT(rec.moduli.front(), 0.5);
}

TEST(IterateOrbit, ExactPoleIsPoleHit) {
  const DiskForestSpec spec = std::get<DiskForestSpec>(forest());
  const OrbitRecord rec = iterate_orbit(spec, PlanePoint(spec.disks[3].center), 2.0, 10);
  EXPECT_EQ(rec.classification, Classification::pole_hit);
  EXPECT_EQ(rec.steps_taken, 1);
  const SeriesFunctionSpec g(2.0, 1);
  EXPECT_EQ(iterate_orbit(g, PlanePoint(pole_location(5, 3, 1.0)), 10.0, 10).classification,
            Classification::pole_hit);
}

TEST(IterateOrbit, PoleHitStableUnderTinyPerturbation) {
  const SeriesFunctionSpec g(2.0, 1);
  const complex u = pole_location(7, 2, 1.0);
  const complex nudged = u + complex(1e-13 * std::abs(u) * 0.5, 0.0);
  EXPECT_EQ(iterate_orbit(g, PlanePoint(nudged), 10.0, 10).classification, Classification::pole_hit);
}

TEST(IterateOrbit, InnerDiskCentreRegionExceedsTwo) {
  const DiskForestSpec spec = std::get<DiskForestSpec>(forest());
  for (const ForestDisk& d : spec.disks) {
    const OrbitRecord rec = iterate_orbit(spec, PlanePoint(d.center + d.inner_radius / 2.0), 2.0, 5);
    ASSERT_FALSE(rec.moduli.empty());
    EXPECT_GT(rec.moduli.front(), 2.0);
  }
}

TEST(IterateOrbit, ModuliRecordMatchesClassification) {
  const SeriesFunctionSpec g(2.0, 1);
  for (double x = -5.0; x <= 5.0; x += 0.37) {
    const OrbitRecord rec = iterate_orbit(g, PlanePoint(x, 0.3 * x + 0.1), 10.0, 20);
    EXPECT_EQ(rec.moduli.size(), static_cast<std::size_t>(rec.steps_taken));
    if (rec.classification == Classification::escaping) {
      EXPECT_EQ(rec.steps_taken, 20);
      for (double m : rec.moduli) EXPECT_GE(m, 10.0);
    }
    if (rec.classification == Classification::returned) {
      EXPECT_LT(rec.moduli.back(), 10.0);
    }
  }
}

TEST(IterateOrbit, RejectsBadParameters) {
  EXPECT_THROW(iterate_orbit(forest(), PlanePoint(0.0, 0.0), 2.0, 0), ValidationError);
  EXPECT_THROW(iterate_orbit(forest(), PlanePoint(0.0, 0.0), 1.0, 5), ValidationError);
}

TEST(ClassifyGrid, RejectsZeroHorizonAndTinyGrid) {
  EXPECT_THROW(classify_grid(forest(), kSquare, 10.0, 0), ValidationError);
  EXPECT_THROW(classify_grid(forest(), GridSpec{{0, 0, 1, 1}, 1, 5}, 10.0, 5), ValidationError);
}

TEST(ClassifyGrid, ForestGridInsideHalfDiskAllReturned) {
  const GridClassification g = classify_grid(forest(), GridSpec{{-0.3, -0.3, 0.6, 0.6}, 20, 20}, 2.0, 10);
  EXPECT_EQ(g.count(Classification::returned), 400u);
}

TEST(ClassifyGrid, DeterministicAcrossRunsAndJobCounts) {
  const SeriesFunctionSpec g(2.0, 1);
  const GridSpec grid{{-5.0, -5.0, 10.0, 10.0}, 100, 100};
  const GridClassification a = classify_grid(g, grid, 10.0, 30, 1);
  const GridClassification b = classify_grid(g, grid, 10.0, 30, 4);
  EXPECT_EQ(a.cells, b.cells);
  EXPECT_EQ(a.steps, b.steps);
  std::ostringstream ca, cb;
  write_grid_csv(a, ca);
  write_grid_csv(b, cb);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(encode_grid_png(a), encode_grid_png(b));
  // Long-horizon escape is rare on a grid; one step still finds escapers.
  const GridClassification one = classify_grid(g, grid, 10.0, 1, 3);
  EXPECT_GT(one.count(Classification::escaping), 0u);
  EXPECT_EQ(one.cells, classify_grid(g, grid, 10.0, 1, 1).cells);
}

TEST(ClassifyGrid, EscapingSetShrinksWithThresholdAndHorizon) {
  const SeriesFunctionSpec g(2.0, 1);
  const GridSpec kSquare{{-5.0, -5.0, 10.0, 10.0}, 200, 200};
  const GridClassification r10 = classify_grid(g, kSquare, 10.0, 1);
  const GridClassification r100 = classify_grid(g, kSquare, 100.0, 1);
  const GridClassification h30 = classify_grid(g, kSquare, 10.0, 2);
  EXPECT_GT(r10.count(Classification::escaping), r100.count(Classification::escaping));
  EXPECT_GT(r100.count(Classification::escaping), 0u);
  for (std::size_t i = 0; i < r10.cells.size(); ++i) {
    if (r100.cells[i] == Classification::escaping) {
      EXPECT_EQ(r10.cells[i], Classification::escaping);
    }
    if (h30.cells[i] == Classification::escaping) {
      EXPECT_EQ(r10.cells[i], Classification::escaping);
    }
  }
}

TEST(EscapingPoints, CountAndEmptyCase) {
  const SeriesFunctionSpec g(2.0, 1);
  const GridClassification grid = classify_grid(g, kSquare, 10.0, 10);
  EXPECT_EQ(escaping_points(grid).size(), grid.count(Classification::escaping));
  const GridClassification none = classify_grid(forest(), GridSpec{{-0.3, -0.3, 0.6, 0.6}, 4, 4}, 2.0, 3);
  EXPECT_TRUE(escaping_points(none).empty());
}

TEST(GridOutput, CsvLayoutAndPngPalette) {
  GridClassification g;
  g.grid = GridSpec{{0.0, 0.0, 2.0, 2.0}, 2, 2};
  g.cells = {Classification::escaping, Classification::returned, Classification::pole_hit,
             Classification::undetermined};
  g.steps = {5, 1, 2, 0};
  std::ostringstream csv;
  write_grid_csv(g, csv);
  EXPECT_EQ(csv.str(), "cell,re,im,code,steps\n0,0.5,0.5,0,5\n1,1.5,0.5,1,1\n2,0.5,1.5,2,2\n3,1.5,1.5,3,0\n");
  const std::string png = encode_grid_png(g);
  EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  EXPECT_EQ(palette(Classification::pole_hit).r, 255);
  EXPECT_EQ(palette(Classification::undetermined).g, 128);
}
