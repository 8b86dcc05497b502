#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "escdim/construction.hpp"
#include "escdim/dimension.hpp"
#include "escdim/dynamics.hpp"
#include "escdim/io.hpp"
#include "escdim/pipeline.hpp"
#include "escdim/pole_atlas.hpp"

namespace escdim::cli {

namespace fs = std::filesystem;

inline constexpr const char* output_dir_env = "ESCDIM_OUTPUT_DIR";

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

// Writes named files into dir and a manifest over them; returns the paths.
inline std::vector<fs::path> write_outputs(const fs::path& dir,
                                           const std::vector<std::pair<std::string, std::string>>& files) {
  io::ensure_directory(dir);
  std::vector<fs::path> paths;
  for (const auto& [name, bytes] : files) {
    io::write_file(dir / name, bytes);
    paths.push_back(dir / name);
  }
  io::write_manifest(dir, paths);
  return paths;
}

inline std::string to_text(auto writer) {
  std::ostringstream o;
  writer(o);
  return o.str();
}

struct Options {
  // shared
  int jobs = 0;  // 0: machine parallelism
  std::uint64_t seed = Tolerances::default_seed;
  std::string out = "escdim_out";
  // function
  double rho = 2.0;
  int M = 1;
  bool forest = false;
  std::string forest_json;
  // atlas / threshold
  double r_max = 0.0;  // 0: radius holding the default number of rings
  // orbit / grid
  double re = 0.0;
  double im = 0.0;
  double R = 10.0;
  int horizon = 2;
  std::vector<double> region{-5.0, -5.0, 10.0, 10.0};
  int nx = 200;
  int ny = 200;
  // mcmullen
  double cover_R = 1e6;
  double A = 1.0;
  double B = 1.0;
  int levels = 50;
  // web
  int max_ring = 30;
  int per_component = 200;
  // forest
  std::string layout = "default";
  int disk_count = 12;
  double budget = 0.25;
  std::size_t samples = 10000;
  int annulus = 2;
  int probe_horizon = 5;
  std::string save_params;
  // experiment / sweep
  std::string config;
  std::vector<double> rhos{0.5, 1.0, 2.0, 4.0};
  std::vector<int> Ms{1, 2, 3};
  bool no_grid = false;
  long atlas_rings = Tolerances::default_atlas_rings;
};

inline FunctionSpec function_from(const Options& o) {
  if (!o.forest_json.empty()) return forest_from_text(io::read_file(o.forest_json));
  if (o.forest) return choose_forest_params(default_forest_layout(), o.budget);
  return SeriesFunctionSpec(o.rho, o.M);
}

inline Rect region_from(const Options& o) {
  const Rect r{o.region[0], o.region[1], o.region[2], o.region[3]};
  r.validate();
  return r;
}

inline DiskForestSpec forest_from(const Options& o) {
  if (!o.forest_json.empty()) return forest_from_text(io::read_file(o.forest_json));
  const auto layout = o.layout == "random" ? random_forest_layout(o.seed, o.disk_count) : default_forest_layout();
  return choose_forest_params(layout, o.budget);
}

// Runs the command line; returns the process exit code. 0 success, 2 bad
// input, 3 numerical failure or failed verification, 4 file-system failure.
inline int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  Options o;
  if (const char* env = std::getenv(output_dir_env); env != nullptr && *env != '\0') o.out = env;

  CLI::App app{"Escaping-set dimension experiments for meromorphic functions of finite order"};
  app.name("escdim");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::function<int()> action;

  auto add_jobs = [&](CLI::App* sub) {
    sub->add_option("--jobs", o.jobs, "Worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "PRNG seed"); };
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory (env " + std::string(output_dir_env) + ")");
  };
  auto function_opts = [&](CLI::App* sub) {
    sub->add_option("--rho", o.rho, "Order rho of the series function")->check(CLI::PositiveNumber);
    sub->add_option("--M", o.M, "Power M in f = g^M")->check(CLI::Range(1, 12));
    sub->add_flag("--forest", o.forest, "Use the default disk-forest function instead");
    sub->add_option("--forest-json", o.forest_json, "Disk-forest description (JSON) to use instead");
  };
  auto grid_opts = [&](CLI::App* sub) {
    sub->add_option("--region", o.region, "Region x0 y0 width height")->expected(4);
    sub->add_option("--nx", o.nx, "Grid columns")->check(CLI::Range(2, 4096));
    sub->add_option("--ny", o.ny, "Grid rows")->check(CLI::Range(2, 4096));
    sub->add_option("--R", o.R, "Escape threshold");
    sub->add_option("--horizon", o.horizon, "Iteration horizon")->check(CLI::PositiveNumber);
  };

  // atlas
  auto* atlas = app.add_subcommand("atlas", "Write the pole atlas (a_j, b_j, m_j) up to a radius");
  atlas->add_option("rho,--rho", o.rho, "Order rho")->check(CLI::PositiveNumber);
  atlas->add_option("M,--M", o.M, "Power M")->check(CLI::Range(1, 12));
  atlas->add_option("r_max,--r-max", o.r_max, "Atlas radius (0: 1000 complete rings)");
  add_out(atlas);
  atlas->callback([&] {
    action = [&] {
      const double r = o.r_max > 0.0 ? o.r_max : default_atlas_radius(o.rho);
      const PoleAtlas a = build_atlas(o.rho, o.M, r);
      write_outputs(o.out, {{"atlas.csv", to_text([&](std::ostream& s) { write_atlas_csv(a, s); })}});
      out << "atlas: " << a.size() << " poles with |a| <= " << format_double(r) << " -> "
          << (fs::path(o.out) / "atlas.csv").string() << '\n';
      return 0;
    };
  });

  // threshold
  auto* threshold = app.add_subcommand("threshold", "Convergence threshold of the pole cover sum");
  threshold->add_option("rho,--rho", o.rho, "Order rho")->check(CLI::PositiveNumber);
  threshold->add_option("M,--M", o.M, "Power M")->check(CLI::Range(1, 12));
  threshold->add_option("r_max,--r-max", o.r_max, "Atlas radius (0: 1000 complete rings)");
  threshold->callback([&] {
    action = [&] {
      const double r = o.r_max > 0.0 ? o.r_max : default_atlas_radius(o.rho);
      const ThresholdEstimate est = critical_exponent(ring_cover_terms(o.rho, o.M, r));
      out << "t* ≈ " << fixed(est.value) << " ± " << format_double(est.bracket_width) << " (formula "
          << fixed(dimension_bound(o.rho, o.M)) << ")\n";
      return 0;
    };
  });

  // orbit
  auto* orbit = app.add_subcommand("orbit", "Iterate one starting point and classify its orbit");
  function_opts(orbit);
  orbit->add_option("--re", o.re, "Real part of the starting point");
  orbit->add_option("--im", o.im, "Imaginary part of the starting point");
  orbit->add_option("--R", o.R, "Escape threshold");
  orbit->add_option("--horizon", o.horizon, "Iteration horizon")->check(CLI::PositiveNumber);
  orbit->callback([&] {
    action = [&] {
      const OrbitRecord rec = iterate_orbit(function_from(o), PlanePoint(o.re, o.im), o.R, o.horizon);
      out << "classification: " << to_string(rec.classification) << '\n' << "steps: " << rec.steps_taken << '\n';
      for (std::size_t i = 0; i < rec.moduli.size(); ++i) {
        out << "|z_" << (i + 1) << "| = " << format_double(rec.moduli[i]) << '\n';
      }
      if (!rec.diagnostic.empty()) out << "diagnostic: " << rec.diagnostic << '\n';
      return 0;
    };
  });

  // grid
  auto* grid = app.add_subcommand("grid", "Classify a grid of starting points; write CSV and PNG");
  function_opts(grid);
  grid_opts(grid);
  add_jobs(grid);
  add_out(grid);
  grid->callback([&] {
    action = [&] {
      const GridClassification g =
          classify_grid(function_from(o), GridSpec{region_from(o), o.nx, o.ny}, o.R, o.horizon, o.jobs);
      write_outputs(o.out, {{"grid.csv", to_text([&](std::ostream& s) { write_grid_csv(g, s); })},
                            {"grid.png", encode_grid_png(g)}});
      for (Classification c : {Classification::escaping, Classification::returned, Classification::pole_hit,
                               Classification::undetermined}) {
        out << to_string(c) << ": " << g.count(c) << '\n';
      }
      return 0;
    };
  });

  // dimension
  auto* dimension = app.add_subcommand("dimension", "Box-counting dimension of the escaping grid cells");
  function_opts(dimension);
  grid_opts(dimension);
  add_jobs(dimension);
  add_out(dimension);
  dimension->callback([&] {
    action = [&] {
      const Rect region = region_from(o);
      const GridClassification g = classify_grid(function_from(o), GridSpec{region, o.nx, o.ny}, o.R, o.horizon,
                                                 o.jobs);
      const auto pts = escaping_points(g);
      if (pts.empty()) throw NumericalError("no escaping cells; box dimension undefined");
      const double side = std::max(region.width, region.height);
      const double cell = std::max(region.width / o.nx, region.height / o.ny);
      std::vector<double> sizes;
      for (int q = 1; side * std::ldexp(1.0, -q) >= 2.0 * cell; ++q) sizes.push_back(side * std::ldexp(1.0, -q));
      const DimensionEstimate est = fit_box_dimension(pts, sizes, region, o.jobs);
      write_outputs(o.out, {{"box_counts.csv", to_text([&](std::ostream& s) { write_box_counts_csv(est, s); })}});
      out << "box dimension ≈ " << fixed(est.value) << " (rms residual " << format_double(est.fit_residual)
          << ", " << est.point_count << " cells, " << est.scales_used.size() << " scales)\n";
      return 0;
    };
  });

  // mcmullen
  auto* mcmullen = app.add_subcommand("mcmullen", "Nested-cover lower bound for given cover constants");
  mcmullen->add_option("--rho", o.rho, "Order rho")->check(CLI::PositiveNumber);
  mcmullen->add_option("--M", o.M, "Power M")->check(CLI::Range(1, 12));
  mcmullen->add_option("--R", o.cover_R, "Working radius R");
  mcmullen->add_option("--A", o.A, "Diameter constant A")->check(CLI::PositiveNumber);
  mcmullen->add_option("--B", o.B, "Density constant B")->check(CLI::PositiveNumber);
  mcmullen->add_option("--levels", o.levels, "Cover levels")->check(CLI::Range(4, 100000));
  add_out(mcmullen);
  mcmullen->callback([&] {
    action = [&] {
      const CoverSequence cover = construction_cover_sequence(o.rho, o.M, o.cover_R, o.A, o.B, o.levels);
      const McMullenEstimate est = mcmullen_bound(cover);
      write_outputs(o.out, {{"cover.csv", to_text([&](std::ostream& s) { write_cover_csv(cover, est, s); })}});
      out << "bound: " << format_double(est.bound) << " (spread " << format_double(est.spread) << ", formula "
          << fixed(dimension_bound(o.rho, o.M)) << ")\n";
      return 0;
    };
  });

  // verify-web
  auto* web = app.add_subcommand("verify-web", "Check |g| <= 4C + 4 on sampled web points");
  web->add_option("--rho", o.rho, "Order rho")->check(CLI::PositiveNumber);
  web->add_option("--max-ring", o.max_ring, "Largest ring index n")->check(CLI::Range(2, 100000));
  web->add_option("--per-component", o.per_component, "Samples per circle and per spoke")->check(CLI::Range(2, 1000000));
  add_jobs(web);
  web->callback([&] {
    action = [&] {
      const WebBoundCheck c = check_web_bound(sample_web(SeriesFunctionSpec(o.rho, 1), o.max_ring, o.per_component,
                                                         o.jobs));
      out << "max|g| = " << format_double(c.max_modulus) << ", bound 4C+4 = " << format_double(c.bound) << " (C = "
          << format_double(c.web_constant) << "), samples " << c.samples << ", violations " << c.violations << ": "
          << (c.pass() ? "PASS" : "FAIL") << '\n';
      return c.pass() ? 0 : 3;
    };
  });

  // verify-forest
  auto* vforest = app.add_subcommand("verify-forest", "Choose disk-forest parameters and check every inequality");
  vforest->add_option("--layout", o.layout, "Disk layout")->check(CLI::IsMember({"default", "random"}));
  vforest->add_option("--count", o.disk_count, "Disks in a random layout")->check(CLI::Range(1, 1000));
  vforest->add_option("--budget", o.budget, "Weight budget, sum of eps_k")->check(CLI::Range(0.0, 0.5));
  vforest->add_option("--samples", o.samples, "Samples per stratum in the pointwise check")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000000}));
  vforest->add_option("--forest-json", o.forest_json, "Check this disk-forest description instead");
  vforest->add_option("--save-params", o.save_params, "Also write the parameters as JSON to this file");
  add_seed(vforest);
  add_out(vforest);
  vforest->callback([&] {
    action = [&] {
      const DiskForestSpec spec = forest_from(o);
      const ConstraintReport rep = validate_forest_params(spec);
      std::vector<std::pair<std::string, std::string>> files{
          {"constraints.csv", to_text([&](std::ostream& s) { write_constraint_csv(rep, s); })},
          {"forest.json", forest_to_text(spec)}};
      write_outputs(o.out, files);
      if (!o.save_params.empty()) io::write_file(o.save_params, forest_to_text(spec));
      out << "disks: " << spec.disks.size() << ", constraints checked: " << rep.rows.size() << '\n';
      if (const ConstraintRow* bad = rep.first_failure()) {
        out << "constraint " << bad->name << " (index " << bad->index << ") fails: " << format_double(bad->lhs)
            << " vs " << format_double(bad->rhs) << ": FAIL\n";
        return 3;
      }
      const DichotomyReport d = forest_dichotomy_check(spec, o.samples, o.seed);
      out << "pointwise: gap " << d.gap_violations << ", inner " << d.inner_violations << ", derivative "
          << d.derivative_violations << " violations in " << 3 * d.samples_per_stratum << " samples: "
          << (d.pass() ? "PASS" : "FAIL") << '\n';
      return d.pass() ? 0 : 3;
    };
  });

  // probe
  auto* probe = app.add_subcommand("probe", "Monte Carlo share of points persisting in the disks of one annulus");
  probe->add_option("--annulus", o.annulus, "Annulus index n of P_n = {2^n <= |z| < 2^(n+1)}")
      ->check(CLI::PositiveNumber);
  probe->add_option("--samples", o.samples, "Samples")->check(CLI::Range(std::size_t{1000}, std::size_t{100000000}));
  probe->add_option("--horizon", o.probe_horizon, "Iterations per sample")->check(CLI::NonNegativeNumber);
  probe->add_option("--budget", o.budget, "Weight budget for the default layout")->check(CLI::Range(0.0, 0.5));
  probe->add_option("--forest-json", o.forest_json, "Disk-forest description (JSON) to probe");
  add_jobs(probe);
  add_seed(probe);
  add_out(probe);
  probe->callback([&] {
    action = [&] {
      const AreaProbeResult r = area_probe(forest_from(o), o.annulus, o.samples, o.probe_horizon, o.seed, o.jobs);
      write_outputs(o.out, {{"probe.csv", to_text([&](std::ostream& s) { write_probe_csv(r, s); })}});
      out << "persisting " << r.persisting << "/" << r.samples << " = " << fixed(r.fraction()) << " ± "
          << fixed(r.standard_error()) << " (strict " << fixed(r.strict_fraction()) << ", exited " << r.exited
          << ")\n";
      return 0;
    };
  });

  // experiment
  ExperimentConfig ec;
  auto* experiment = app.add_subcommand("experiment", "Run the full pipeline for one (rho, M)");
  experiment->add_option("--config", o.config, "Config JSON; only --seed and --jobs still apply when given");
  experiment->add_option("--rho", ec.rho, "Order rho")->check(CLI::PositiveNumber);
  experiment->add_option("--M", ec.M, "Power M")->check(CLI::Range(1, 12));
  experiment->add_option("--R", ec.R, "Nested-cover working radius (raised to the admissible floor)");
  experiment->add_option("--levels", ec.levels, "Nested-cover levels");
  experiment->add_option("--atlas-rings", ec.atlas_rings, "Complete pole rings in the atlas");
  experiment->add_option("--nx", ec.nx, "Grid columns");
  experiment->add_option("--ny", ec.ny, "Grid rows");
  experiment->add_option("--grid-R", ec.grid_R, "Grid escape threshold");
  experiment->add_option("--horizon", ec.horizon, "Grid iteration horizon");
  experiment->add_flag("--no-grid", o.no_grid, "Skip the grid and box-dimension stages");
  add_jobs(experiment);
  add_seed(experiment);
  add_out(experiment);
  experiment->callback([&] {
    action = [&] {
      ExperimentConfig c = ec;
      if (!o.config.empty()) {
        c = load_config(o.config);
        if (experiment->get_option("--seed")->count() > 0) c.seed = o.seed;
      } else {
        c.seed = o.seed;
        c.output_dir = o.out;
        c.run_grid = !o.no_grid;
      }
      const ExperimentReport r = run_experiment(c, o.jobs);
      out << report_text(r);
      for (const auto& [stage, seconds] : r.timings) out << "time " << stage << ": " << fixed(seconds, 3) << " s\n";
      out << "wrote " << r.artifacts.size() << " files to " << c.output_dir << '\n';
      return 0;
    };
  });

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Run experiments over a grid of (rho, M)");
  sweep_cmd->add_option("--rho", o.rhos, "Values of rho")->delimiter(',');
  sweep_cmd->add_option("--M", o.Ms, "Values of M")->delimiter(',');
  sweep_cmd->add_option("--atlas-rings", o.atlas_rings, "Complete pole rings in each atlas");
  sweep_cmd->add_flag("--no-grid", o.no_grid, "Skip the grid and box-dimension stages");
  add_jobs(sweep_cmd);
  add_seed(sweep_cmd);
  add_out(sweep_cmd);
  sweep_cmd->callback([&] {
    action = [&] {
      std::vector<ExperimentConfig> configs;
      for (double rho : o.rhos) {
        for (int M : o.Ms) {
          ExperimentConfig c;
          c.rho = rho;
          c.M = M;
          c.atlas_rings = o.atlas_rings;
          c.run_grid = !o.no_grid;
          c.seed = o.seed;
          c.output_dir = (fs::path(o.out) / ("rho" + format_double(rho) + "_M" + std::to_string(M))).string();
          configs.push_back(c);
        }
      }
      const SweepReport s = sweep(configs, o.out, o.jobs);
      out << sweep_table(s);
      const bool ok = s.formula_monotone_in_rho && s.formula_monotone_in_M && s.threshold_monotone_in_rho &&
                      s.threshold_monotone_in_M;
      out << "monotone in rho and M: " << (ok ? "PASS" : "FAIL") << '\n';
      return ok ? 0 : 3;
    };
  });

  // defaults
  auto* defaults = app.add_subcommand("defaults", "Print the default experiment config as JSON");
  defaults->add_option("--write", o.config, "Write it to this file instead");
  defaults->callback([&] {
    action = [&] {
      if (o.config.empty()) {
        out << config_to_text(ExperimentConfig{});
      } else {
        save_config(ExperimentConfig{}, o.config);
      }
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (o.jobs == 0) o.jobs = default_jobs();
  try {
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace escdim::cli
