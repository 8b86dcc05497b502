#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "escdim/construction.hpp"
#include "escdim/dimension.hpp"
#include "escdim/dynamics.hpp"
#include "escdim/errors.hpp"
#include "escdim/io.hpp"
#include "escdim/numeric.hpp"
#include "escdim/parallel.hpp"
#include "escdim/pole_atlas.hpp"
#include "escdim/tolerances.hpp"

namespace escdim {

namespace fs = std::filesystem;

inline constexpr int config_schema_version = 1;

// Everything that determines an experiment's output files. The thread count
// is deliberately absent: results do not depend on it.
struct ExperimentConfig {
  double rho = 2.0;
  int M = 1;
  double R = 1e6;          // nested-cover working radius; raised to the floor if below it
  double A = 1.0;          // cover diameter constant
  double B = 1.0;          // cover density constant
  int levels = 50;         // nested-cover levels
  long atlas_rings = Tolerances::default_atlas_rings;
  Rect region{-5.0, -5.0, 10.0, 10.0};
  int nx = 200;
  int ny = 200;
  double grid_R = 10.0;    // escape threshold for the grid classification
  int horizon = 2;
  bool run_grid = true;
  std::uint64_t seed = Tolerances::default_seed;
  std::string output_dir = "escdim_out";

  void validate() const {
    require(rho > 0.0 && std::isfinite(rho), "rho must be positive");
    require(M >= 1 && M <= 12, "M must lie in [1, 12]");
    require(std::isfinite(R) && R > 16.0, "R must exceed 16");
    require(A > 0.0 && std::isfinite(A) && B > 0.0 && std::isfinite(B), "cover constants must be positive");
    require(levels >= 4 && levels <= 100000, "levels must lie in [4, 100000]");
    require(atlas_rings >= 100 && atlas_rings <= 2000, "atlas_rings must lie in [100, 2000]");
    region.validate();
    require(nx >= 2 && ny >= 2 && nx <= 4096 && ny <= 4096, "grid resolution must lie in [2, 4096]");
    require(grid_R > 1.0 && std::isfinite(grid_R), "grid_R must exceed 1");
    require(horizon >= 1, "horizon must be at least 1");
    require(!output_dir.empty(), "output_dir must not be empty");
  }
};

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = config_schema_version;
  j["rho"] = c.rho;
  j["M"] = c.M;
  j["R"] = c.R;
  j["A"] = c.A;
  j["B"] = c.B;
  j["levels"] = c.levels;
  j["atlas_rings"] = c.atlas_rings;
  j["region"] = {c.region.x0, c.region.y0, c.region.width, c.region.height};
  j["nx"] = c.nx;
  j["ny"] = c.ny;
  j["grid_R"] = c.grid_R;
  j["horizon"] = c.horizon;
  j["run_grid"] = c.run_grid;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

inline std::string config_to_text(const ExperimentConfig& c) { return config_to_json(c).dump(2) + "\n"; }

// Missing keys keep their defaults; unknown keys and a wrong schema version
// are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  require(j.is_object(), "config must be a JSON object");
  require(j.contains("schema_version") && j["schema_version"].is_number_integer() &&
              j["schema_version"].get<int>() == config_schema_version,
          "config schema_version must be " + std::to_string(config_schema_version));
  ExperimentConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const nlohmann::json& v = it.value();
      if (k == "schema_version") continue;
      else if (k == "rho") c.rho = v.get<double>();
      else if (k == "M") c.M = v.get<int>();
      else if (k == "R") c.R = v.get<double>();
      else if (k == "A") c.A = v.get<double>();
      else if (k == "B") c.B = v.get<double>();
      else if (k == "levels") c.levels = v.get<int>();
      else if (k == "atlas_rings") c.atlas_rings = v.get<long>();
      else if (k == "region") {
        const auto r = v.get<std::vector<double>>();
        require(r.size() == 4, "region must be [x0, y0, width, height]");
        c.region = Rect{r[0], r[1], r[2], r[3]};
      } else if (k == "nx") c.nx = v.get<int>();
      else if (k == "ny") c.ny = v.get<int>();
      else if (k == "grid_R") c.grid_R = v.get<double>();
      else if (k == "horizon") c.horizon = v.get<int>();
      else if (k == "run_grid") c.run_grid = v.get<bool>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "output_dir") c.output_dir = v.get<std::string>();
      else throw ValidationError("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c, const fs::path& path) { io::write_file(path, config_to_text(c)); }

// Disk-forest parameters as JSON: {"schema_version": 1, "disks": [{"center":
// [re, im], "radius", "inner_radius", "clearance" (null for a lone disk),
// "weight", "order"}, ...]}.
inline std::string forest_to_text(const DiskForestSpec& spec) {
  nlohmann::ordered_json j;
  j["schema_version"] = config_schema_version;
  j["disks"] = nlohmann::ordered_json::array();
  for (const ForestDisk& d : spec.disks) {
    nlohmann::ordered_json e;
    e["center"] = {d.center.real(), d.center.imag()};
    e["radius"] = d.radius;
    e["inner_radius"] = d.inner_radius;
    e["clearance"] = std::isfinite(d.clearance) ? nlohmann::ordered_json(d.clearance) : nlohmann::ordered_json();
    e["weight"] = d.weight;
    e["order"] = d.order;
    j["disks"].push_back(e);
  }
  return j.dump(2) + "\n";
}

// Parses the layout only; whether the parameters satisfy the construction is
// left to validate_forest_params.
inline DiskForestSpec forest_from_text(const std::string& text) {
  DiskForestSpec spec;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    require(j.value("schema_version", 0) == config_schema_version,
            "forest schema_version must be " + std::to_string(config_schema_version));
    require(j.contains("disks") && j["disks"].is_array() && !j["disks"].empty(), "forest needs a nonempty disks array");
    for (const nlohmann::json& e : j["disks"]) {
      ForestDisk d;
      const auto c = e.at("center").get<std::vector<double>>();
      require(c.size() == 2, "disk center must be [re, im]");
      d.center = complex(c[0], c[1]);
      d.radius = e.at("radius").get<double>();
      d.inner_radius = e.at("inner_radius").get<double>();
      d.clearance = e.at("clearance").is_null() ? std::numeric_limits<double>::infinity()
                                                : e.at("clearance").get<double>();
      d.weight = e.at("weight").get<double>();
      d.order = e.at("order").get<long>();
      spec.disks.push_back(d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed forest description: ") + e.what());
  }
  return spec;
}

// Smallest admissible nested-cover radius for f = g^M given a working R0:
// max(2^M R0, (16 R0)^M).
inline double cover_radius_floor(double r0, int M) {
  require(r0 > 0.0, "R0 must be positive");
  return std::max(std::ldexp(r0, M), std::pow(16.0 * r0, M));
}

struct McMullenPoint {
  double R = 0.0;
  double bound = 0.0;
  double spread = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  double formula_value = 0.0;

  std::size_t atlas_size = 0;
  double atlas_radius = 0.0;
  double order_estimate = 0.0;
  bool packing_ok = false;

  double threshold = 0.0;
  double threshold_uncertainty = 0.0;

  double working_r0 = 0.0;
  double web_max_modulus = 0.0;
  double web_bound = 0.0;
  double R_floor = 0.0;
  double R_used = 0.0;
  bool R_raised = false;
  std::vector<McMullenPoint> mcmullen;
  double mcmullen_limit = 0.0;
  double mcmullen_uncertainty = 0.0;

  double derivative_envelope = 0.0;

  bool grid_ran = false;
  std::size_t escaping_cells = 0;
  std::size_t returned_cells = 0;
  std::size_t pole_cells = 0;
  std::size_t undetermined_cells = 0;
  bool box_dimension_ran = false;
  double box_dimension = 0.0;
  double box_dimension_residual = 0.0;
  std::string box_dimension_note;

  std::vector<fs::path> artifacts;                      // relative to output_dir, manifest order
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage; never written to files
};

namespace detail {

// Runs one pipeline stage, tagging any failure with the stage name.
template <class F>
auto staged(const std::string& stage, std::vector<std::pair<std::string, double>>& timings, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    timings.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      finish();
    } else {
      auto result = body();
      finish();
      return result;
    }
  } catch (const Error& e) {
    if (!e.stage().empty()) throw;
    switch (e.kind()) {
      case ErrorKind::validation: throw ValidationError(e.what(), stage);
      case ErrorKind::numerical: throw NumericalError(e.what(), stage);
      case ErrorKind::io: throw IoError(e.what(), stage);
    }
    throw;
  } catch (const std::bad_alloc&) {
    throw NumericalError("out of memory", stage);
  }
}

inline std::string csv_text(auto writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

}  // namespace detail

inline std::string report_text(const ExperimentReport& r) {
  // Recomputed here, independently of dimension_bound, as a cross-check.
  const double m = static_cast<double>(r.config.M);
  const double closed_form = 2.0 * m * r.config.rho / (2.0 + m * r.config.rho);
  if (closed_form != r.formula_value) {
    throw NumericalError("closed-form dimension bound disagrees with the catalogue value", "report");
  }
  std::ostringstream o;
  auto line = [&](const std::string& key, const std::string& value) { o << key << ": " << value << '\n'; };
  auto num = [](double v) { return format_double(v); };
  line("rho", num(r.config.rho));
  line("M", std::to_string(r.config.M));
  line("formula_value", num(r.formula_value));
  line("atlas_size", std::to_string(r.atlas_size));
  line("atlas_radius", num(r.atlas_radius));
  line("order_estimate", num(r.order_estimate));
  line("packing_ok", r.packing_ok ? "true" : "false");
  line("threshold", num(r.threshold));
  line("threshold_uncertainty", num(r.threshold_uncertainty));
  line("threshold_minus_formula", num(r.threshold - r.formula_value));
  line("working_r0", num(r.working_r0));
  line("web_max_modulus", num(r.web_max_modulus));
  line("web_bound", num(r.web_bound));
  line("R_floor", num(r.R_floor));
  line("R_used", num(r.R_used));
  line("R_raised", r.R_raised ? "true" : "false");
  for (const McMullenPoint& p : r.mcmullen) {
    line("mcmullen_bound@" + num(p.R), num(p.bound) + " (spread " + num(p.spread) + ")");
  }
  line("mcmullen_limit", num(r.mcmullen_limit));
  line("mcmullen_uncertainty", num(r.mcmullen_uncertainty));
  line("mcmullen_minus_formula", num(r.mcmullen_limit - r.formula_value));
  line("derivative_envelope", num(r.derivative_envelope));
  if (r.grid_ran) {
    line("grid", std::to_string(r.config.nx) + "x" + std::to_string(r.config.ny) + " R=" + num(r.config.grid_R) +
                     " horizon=" + std::to_string(r.config.horizon));
    line("escaping_cells", std::to_string(r.escaping_cells));
    line("returned_cells", std::to_string(r.returned_cells));
    line("pole_cells", std::to_string(r.pole_cells));
    line("undetermined_cells", std::to_string(r.undetermined_cells));
    if (r.box_dimension_ran) {
      line("box_dimension", num(r.box_dimension));
      line("box_dimension_residual", num(r.box_dimension_residual));
    } else {
      line("box_dimension", "skipped (" + r.box_dimension_note + ")");
    }
  } else {
    line("grid", "skipped");
  }
  return o.str();
}

// Runs atlas, threshold, nested-cover, derivative and (optionally) grid
// stages, writing every artifact plus manifest.txt into config.output_dir.
// Files are byte-identical across runs and thread counts.
inline ExperimentReport run_experiment(const ExperimentConfig& config, int jobs = default_jobs()) {
  ExperimentReport rep;
  rep.config = config;
  auto& T = rep.timings;
  detail::staged("config", T, [&] { config.validate(); });
  const fs::path dir = config.output_dir;
  std::vector<std::pair<fs::path, std::string>> files;
  auto add = [&](const std::string& name, std::string bytes) { files.emplace_back(name, std::move(bytes)); };

  rep.formula_value = dimension_bound(config.rho, config.M);
  const SeriesFunctionSpec spec(config.rho, config.M);

  detail::staged("atlas", T, [&] {
    const PoleAtlas atlas = build_atlas(config.rho, config.M, default_atlas_radius(config.rho, config.atlas_rings));
    rep.atlas_size = atlas.size();
    rep.atlas_radius = atlas.r_max();
    rep.order_estimate = convergence_exponent_estimate(atlas).value;
    const auto rows = packing_check(atlas);
    rep.packing_ok = std::all_of(rows.begin(), rows.end(), [](const PackingRow& p) { return p.holds; });
    add("atlas_summary.csv", detail::csv_text([&](std::ostream& o) {
          o << "radius,count,packing_sum,packing_bound\n";
          for (const PackingRow& p : rows) {
            o << format_double(p.radius) << ',' << counting_function(atlas, p.radius) << ','
              << format_double(p.scale_square_sum) << ',' << format_double(p.bound) << '\n';
          }
        }));

    const ThresholdEstimate th = detail::staged("threshold", T, [&] { return critical_exponent(atlas); });
    rep.threshold = th.value;
    rep.threshold_uncertainty = th.bracket_width;
    add("threshold_scan.csv", detail::csv_text([&](std::ostream& o) {
          o << "t,tail_slope\n";
          for (std::size_t i = 0; i < th.scan_t.size(); ++i) {
            o << format_double(th.scan_t[i]) << ',' << format_double(th.scan_slope[i]) << '\n';
          }
        }));
  });

  detail::staged("web", T, [&] {
    const WebSample w = sample_web(spec, 12, 64, jobs);
    const WebBoundCheck check = check_web_bound(w);
    rep.web_max_modulus = check.max_modulus;
    rep.web_bound = check.bound;
    rep.working_r0 = std::max(2.0, std::pow(w.max_modulus(), spec.M));
    if (!check.pass()) throw NumericalError("sampled |g| exceeds the web bound");
  });

  detail::staged("mcmullen", T, [&] {
    rep.R_floor = cover_radius_floor(rep.working_r0, config.M);
    rep.R_used = std::max(config.R, rep.R_floor);
    rep.R_raised = rep.R_used > config.R;
    std::vector<double> x, y;
    double R = rep.R_used;
    for (int i = 0; i < 4; ++i, R *= 1e3) {
      require(std::isfinite(R), "nested-cover radius overflows");
      const CoverSequence cover = construction_cover_sequence(config.rho, config.M, R, config.A, config.B, config.levels);
      const McMullenEstimate est = mcmullen_bound(cover);
      rep.mcmullen.push_back({R, est.bound, est.spread});
      x.push_back(1.0 / std::log(R));
      y.push_back(est.bound);
      if (i == 0) add("cover.csv", detail::csv_text([&](std::ostream& o) { write_cover_csv(cover, est, o); }));
    }
    // The bound approaches its limit linearly in 1/log R.
    const LineFit fit = fit_line(x, y);
    double spread = 0.0;
    for (const McMullenPoint& p : rep.mcmullen) spread = std::max(spread, p.spread);
    rep.mcmullen_limit = fit.intercept;
    rep.mcmullen_uncertainty = spread + fit.rms_residual;
    add("mcmullen.csv", detail::csv_text([&](std::ostream& o) {
          o << "R,bound,spread\n";
          for (const McMullenPoint& p : rep.mcmullen) {
            o << format_double(p.R) << ',' << format_double(p.bound) << ',' << format_double(p.spread) << '\n';
          }
          o << "inf," << format_double(rep.mcmullen_limit) << ',' << format_double(rep.mcmullen_uncertainty) << '\n';
        }));
  });

  detail::staged("derivative", T, [&] {
    rep.derivative_envelope = mayer_derivative_spotcheck(spec, 20, 10, 40, 1e3, config.seed).empirical_k;
  });

  if (config.run_grid) {
    const GridClassification grid = detail::staged("grid", T, [&] {
      return classify_grid(spec, GridSpec{config.region, config.nx, config.ny}, config.grid_R, config.horizon, jobs);
    });
    rep.grid_ran = true;
    rep.escaping_cells = grid.count(Classification::escaping);
    rep.returned_cells = grid.count(Classification::returned);
    rep.pole_cells = grid.count(Classification::pole_hit);
    rep.undetermined_cells = grid.count(Classification::undetermined);
    add("grid.csv", detail::csv_text([&](std::ostream& o) { write_grid_csv(grid, o); }));
    add("grid.png", encode_grid_png(grid));

    detail::staged("box_dimension", T, [&] {
      const std::vector<PlanePoint> pts = escaping_points(grid);
      if (pts.size() < 16) {
        rep.box_dimension_note = "fewer than 16 escaping cells";
        return;
      }
      const double side = std::max(config.region.width, config.region.height);
      const double cell = std::max(config.region.width / config.nx, config.region.height / config.ny);
      std::vector<double> sizes;
      for (int q = 1; side * std::ldexp(1.0, -q) >= 2.0 * cell; ++q) sizes.push_back(side * std::ldexp(1.0, -q));
      if (sizes.size() < 4) {
        rep.box_dimension_note = "grid too coarse for four box sizes";
        return;
      }
      const DimensionEstimate est = fit_box_dimension(pts, sizes, config.region, jobs);
      rep.box_dimension_ran = true;
      rep.box_dimension = est.value;
      rep.box_dimension_residual = est.fit_residual;
      add("box_counts.csv", detail::csv_text([&](std::ostream& o) { write_box_counts_csv(est, o); }));
    });
  }

  detail::staged("report", T, [&] {
    add("config.json", config_to_text(config));
    add("report.txt", report_text(rep));
    io::ensure_directory(dir);
    std::vector<fs::path> paths;
    for (const auto& [name, bytes] : files) {
      io::write_file(dir / name, bytes);
      paths.push_back(dir / name);
      rep.artifacts.push_back(name);
    }
    io::write_manifest(dir, paths);
    rep.artifacts.push_back("manifest.txt");
  });
  return rep;
}

struct SweepReport {
  std::vector<ExperimentReport> runs;
  bool formula_monotone_in_rho = true;
  bool formula_monotone_in_M = true;
  bool threshold_monotone_in_rho = true;
  bool threshold_monotone_in_M = true;
};

inline std::string sweep_table(const SweepReport& s) {
  std::ostringstream o;
  o << "rho,M,formula,threshold,threshold_uncertainty,mcmullen_limit,mcmullen_uncertainty,escaping_cells\n";
  for (const ExperimentReport& r : s.runs) {
    o << format_double(r.config.rho) << ',' << r.config.M << ',' << format_double(r.formula_value) << ','
      << format_double(r.threshold) << ',' << format_double(r.threshold_uncertainty) << ','
      << format_double(r.mcmullen_limit) << ',' << format_double(r.mcmullen_uncertainty) << ','
      << r.escaping_cells << '\n';
  }
  return o.str();
}

// Runs every config, then checks that the formula strictly increases in rho
// at fixed M and in M at fixed rho, and that the measured thresholds do too
// up to their uncertainties. Writes sweep.csv into sweep_dir.
inline SweepReport sweep(const std::vector<ExperimentConfig>& configs, const fs::path& sweep_dir,
                         int jobs = default_jobs()) {
  require(!configs.empty(), "sweep needs at least one configuration");
  SweepReport s;
  for (const ExperimentConfig& c : configs) s.runs.push_back(run_experiment(c, jobs));

  auto check = [&](auto same_group, auto key, bool& formula_ok, bool& threshold_ok) {
    std::map<double, std::vector<const ExperimentReport*>> groups;
    for (const ExperimentReport& r : s.runs) groups[same_group(r)].push_back(&r);
    for (auto& [g, runs] : groups) {
      std::sort(runs.begin(), runs.end(), [&](auto* a, auto* b) { return key(*a) < key(*b); });
      for (std::size_t i = 1; i < runs.size(); ++i) {
        if (key(*runs[i]) == key(*runs[i - 1])) continue;
        if (!(runs[i]->formula_value > runs[i - 1]->formula_value)) formula_ok = false;
        const double slack = runs[i]->threshold_uncertainty + runs[i - 1]->threshold_uncertainty;
        if (runs[i]->threshold + slack < runs[i - 1]->threshold) threshold_ok = false;
      }
    }
  };
  check([](const ExperimentReport& r) { return static_cast<double>(r.config.M); },
        [](const ExperimentReport& r) { return r.config.rho; }, s.formula_monotone_in_rho,
        s.threshold_monotone_in_rho);
  check([](const ExperimentReport& r) { return r.config.rho; },
        [](const ExperimentReport& r) { return static_cast<double>(r.config.M); }, s.formula_monotone_in_M,
        s.threshold_monotone_in_M);

  io::ensure_directory(sweep_dir);
  io::write_file(sweep_dir / "sweep.csv", sweep_table(s));
  return s;
}

}  // namespace escdim
