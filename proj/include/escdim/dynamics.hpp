#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "escdim/errors.hpp"
#include "escdim/function_catalog.hpp"
#include "escdim/geometry.hpp"
#include "escdim/io.hpp"
#include "escdim/numeric.hpp"
#include "escdim/parallel.hpp"
#include "escdim/tolerances.hpp"

namespace escdim {

// Codes are stable; they appear in CSV output.
enum class Classification : int { escaping = 0, returned = 1, pole_hit = 2, undetermined = 3 };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::escaping: return "escaping";
    case Classification::returned: return "returned";
    case Classification::pole_hit: return "pole_hit";
    case Classification::undetermined: return "undetermined";
  }
  return "undetermined";
}

// Orbit of z0 up to a finite horizon. "escaping" means every modulus from
// step 1 to the horizon stayed >= R: a horizon-qualified stand-in for
// liminf |f^n(z0)| >= R, never a certificate.
struct OrbitRecord {
  PlanePoint start;
  std::vector<double> moduli;  // |f^n(z0)|, n = 1..steps_taken; +inf at a pole
  Classification classification = Classification::undetermined;
  int steps_taken = 0;
  double escape_threshold = 0.0;
  int horizon = 0;
  std::string diagnostic;
};

inline OrbitRecord iterate_orbit(const FunctionSpec& f, const PlanePoint& z0, double R, int horizon) {
  require(horizon >= 1, "horizon must be at least 1");
  require(R > 1.0, "escape threshold R must exceed 1");
  OrbitRecord rec;
  rec.start = z0;
  rec.escape_threshold = R;
  rec.horizon = horizon;
  if (z0.at_infinity()) {
    rec.classification = Classification::pole_hit;
    rec.diagnostic = "start point is infinity";
    return rec;
  }
  PlanePoint w = z0;
  for (int n = 1; n <= horizon; ++n) {
    EvalResult r;
    try {
      r = evaluate(f, w);
    } catch (const Error& e) {
      rec.classification = Classification::undetermined;
      rec.diagnostic = std::string("step ") + std::to_string(n) + ": " + e.what();
      return rec;
    }
    rec.steps_taken = n;
    const double m = r.value.modulus();
    if (r.is_pole || !(m <= Tolerances::overflow_modulus)) {
      rec.moduli.push_back(std::numeric_limits<double>::infinity());
      rec.classification = Classification::pole_hit;
      return rec;
    }
    rec.moduli.push_back(m);
    if (m < R) {
      rec.classification = Classification::returned;
      return rec;
    }
    w = r.value;
  }
  rec.classification = Classification::escaping;
  return rec;
}

struct GridSpec {
  Rect region;
  int nx = 0;
  int ny = 0;

  // Center of cell (ix, iy); iy = 0 is the bottom row (smallest imaginary part).
  complex center(int ix, int iy) const {
    return {region.x0 + (ix + 0.5) * region.width / nx, region.y0 + (iy + 0.5) * region.height / ny};
  }
  std::size_t cell_count() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
};

struct GridClassification {
  GridSpec grid;
  double R = 0.0;
  int horizon = 0;
  std::vector<Classification> cells;  // index iy * nx + ix
  std::vector<int> steps;

  std::size_t count(Classification c) const {
    std::size_t n = 0;
    for (Classification x : cells) n += (x == c);
    return n;
  }
};

inline GridClassification classify_grid(const FunctionSpec& f, const GridSpec& grid, double R, int horizon,
                                        int jobs = default_jobs()) {
  require(grid.nx >= 2 && grid.ny >= 2, "grid resolution must be at least 2x2");
  require(horizon >= 1, "horizon must be at least 1");
  require(R > 1.0, "escape threshold R must exceed 1");
  grid.region.validate();
  GridClassification out{grid, R, horizon, std::vector<Classification>(grid.cell_count()),
                         std::vector<int>(grid.cell_count())};
  parallel_for(grid.cell_count(), jobs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const int ix = static_cast<int>(i % static_cast<std::size_t>(grid.nx));
      const int iy = static_cast<int>(i / static_cast<std::size_t>(grid.nx));
      const OrbitRecord rec = iterate_orbit(f, PlanePoint(grid.center(ix, iy)), R, horizon);
      out.cells[i] = rec.classification;
      out.steps[i] = rec.steps_taken;
    }
  });
  return out;
}

inline std::vector<PlanePoint> escaping_points(const GridClassification& g) {
  std::vector<PlanePoint> points;
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    if (g.cells[i] != Classification::escaping) continue;
    const int ix = static_cast<int>(i % static_cast<std::size_t>(g.grid.nx));
    const int iy = static_cast<int>(i / static_cast<std::size_t>(g.grid.nx));
    points.emplace_back(g.grid.center(ix, iy));
  }
  return points;
}

inline void write_grid_csv(const GridClassification& g, std::ostream& out) {
  out << "cell,re,im,code,steps\n";
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    const int ix = static_cast<int>(i % static_cast<std::size_t>(g.grid.nx));
    const int iy = static_cast<int>(i / static_cast<std::size_t>(g.grid.nx));
    const complex c = g.grid.center(ix, iy);
    out << i << ',' << format_double(c.real()) << ',' << format_double(c.imag()) << ','
        << static_cast<int>(g.cells[i]) << ',' << g.steps[i] << '\n';
  }
}

// Fixed palette: escaping #FFFFFF, returned #000000, pole_hit #FF0000,
// undetermined #808080.
inline io::Rgb palette(Classification c) {
  switch (c) {
    case Classification::escaping: return {255, 255, 255};
    case Classification::returned: return {0, 0, 0};
    case Classification::pole_hit: return {255, 0, 0};
    case Classification::undetermined: return {128, 128, 128};
  }
  return {128, 128, 128};
}

// One pixel per cell; the top image row is the largest imaginary part.
inline std::string encode_grid_png(const GridClassification& g) {
  std::vector<io::Rgb> pixels(g.cells.size());
  for (int row = 0; row < g.grid.ny; ++row) {
    const int iy = g.grid.ny - 1 - row;
    for (int ix = 0; ix < g.grid.nx; ++ix) {
      pixels[static_cast<std::size_t>(row) * static_cast<std::size_t>(g.grid.nx) + static_cast<std::size_t>(ix)] =
          palette(g.cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(g.grid.nx) + static_cast<std::size_t>(ix)]);
    }
  }
  return io::encode_png(g.grid.nx, g.grid.ny, pixels);
}

}  // namespace escdim
