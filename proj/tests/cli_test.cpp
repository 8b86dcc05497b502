#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"

using namespace escdim;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "escdim");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("escdim_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = io::read_file(e.path());
  return files;
}

const std::vector<std::string> kSubcommands{"atlas",        "threshold",     "orbit", "grid",       "dimension", "mcmullen",
                                            "verify-web",   "verify-forest", "probe", "experiment", "sweep",     "defaults"};

// flag -> default ("" when none) from a subcommand's --help output. The
// default is the last bracketed group on the flag's line that is not a
// validator range such as "[1 - 12]".
std::map<std::string, std::string> help_flags(const std::string& help) {
  std::map<std::string, std::string> flags;
  std::istringstream in(help);
  std::string line;
  const std::regex flag_line(R"(^\s+(--[A-Za-z][A-Za-z-]*)(.*)$)");
  const std::regex range(R"(^\S+ - \S+$)");
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, flag_line) || m[1] == "--help-all") continue;
    const std::string rest = m[2];
    std::string value;
    int depth = 0;
    std::size_t open = 0;
    for (std::size_t i = 0; i < rest.size(); ++i) {
      if (rest[i] == '[' && depth++ == 0) open = i;
      if (rest[i] == ']' && --depth == 0) {
        const std::string inner = rest.substr(open + 1, i - open - 1);
        if (!std::regex_match(inner, range)) value = inner;
      }
    }
    flags[m[1]] = value;
  }
  return flags;
}

// flag -> default ("" for an em dash) from the README table of a subcommand.
std::map<std::string, std::string> readme_flags(const std::string& readme, const std::string& sub) {
  const std::string heading = "### `escdim " + sub + "`";
  const std::size_t begin = readme.find(heading);
  EXPECT_NE(begin, std::string::npos) << "README has no section for " << sub;
  if (begin == std::string::npos) return {};
  const std::size_t end = readme.find("\n## ", begin + 1) < readme.find("\n### ", begin + 1)
                              ? readme.find("\n## ", begin + 1)
                              : readme.find("\n### ", begin + 1);
  std::istringstream in(readme.substr(begin, end - begin));
  std::map<std::string, std::string> flags;
  std::string line;
  const std::regex row(R"(^\| `(--[A-Za-z-]+)` \| (`([^`]*)`|—) \|.*$)");
  while (std::getline(in, line)) {
    std::smatch m;
    if (std::regex_match(line, m, row)) flags[m[1]] = m[3].matched ? std::string(m[3]) : std::string();
  }
  return flags;
}

}  // namespace

TEST(Cli, ThresholdPrintsEstimateAndFormula) {
  const Result r = run_cli({"threshold", "2", "1", "1e4"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("t* ≈ 1.0", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("(formula 1.000000)"), std::string::npos) << r.out;
}

TEST(Cli, VerifyWebPasses) {
  const Result r = run_cli({"verify-web", "--rho", "2", "--max-ring", "12", "--per-component", "40"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("max|g| = "), std::string::npos);
  EXPECT_NE(r.out.find("bound 4C+4 = "), std::string::npos);
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(Cli, AtlasCsvRowCountMatchesBruteForceCount) {
  const std::vector<std::pair<std::string, std::string>> cases{{"0.5", "1000"}, {"2", "100"}, {"4", "30"}};
  for (const auto& [rho, r_max] : cases) {
    const fs::path dir = scratch("atlas_" + rho);
    const Result r = run_cli({"atlas", rho, "1", r_max, "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string csv = io::read_file(dir / "atlas.csv");
    const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
    EXPECT_EQ(rows, oracle::brute_force_pole_count(std::stod(rho), std::stod(r_max))) << rho;
    EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  }
}

TEST(Cli, ProbeWithInvalidSpecExitsTwoNamingConstraint) {
  const fs::path dir = scratch("probe");
  const fs::path spec = dir / "forest.json";
  ASSERT_EQ(run_cli({"verify-forest", "--samples", "200", "--out", dir.string(), "--save-params", spec.string()}).code, 0);
  std::string text = io::read_file(spec);
  const std::size_t at = text.find("\"order\": ");
  ASSERT_NE(at, std::string::npos);
  const std::size_t end = text.find_first_of(",\n}", at + 9);
  text.replace(at, end - at, "\"order\": 1");
  io::write_file(spec, text);
  const Result r = run_cli({"probe", "--forest-json", spec.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("derivative_floor"), std::string::npos) << r.err;
}

TEST(Cli, ProbeReportsPersistingShare) {
  const Result r = run_cli({"probe", "--samples", "2000", "--out", scratch("probe_ok").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("persisting "), std::string::npos);
  EXPECT_NE(r.out.find("strict "), std::string::npos);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
  EXPECT_EQ(run_cli({"threshold", "--rho", "-1"}).code, 2);
  EXPECT_EQ(run_cli({"threshold", "2", "1", "5"}).code, 2);  // too few poles
  EXPECT_EQ(run_cli({"grid", "--region", "0", "0", "1"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  // No escaping cells inside the forest's half disk: box dimension undefined.
  EXPECT_EQ(run_cli({"dimension", "--forest", "--region", "-0.3", "-0.3", "0.6", "0.6", "--nx", "16", "--ny", "16",
                     "--R", "2", "--out", scratch("dim").string()})
                .code,
            3);
  const fs::path blocker = scratch("blocker");
  io::write_file(blocker, "not a directory");
  EXPECT_EQ(run_cli({"atlas", "2", "1", "30", "--out", (blocker / "sub").string()}).code, 4);
  EXPECT_EQ(run_cli({"experiment", "--config", scratch("missing.json").string()}).code, 4);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const fs::path dir = scratch("env");
  ::setenv(cli::output_dir_env, dir.c_str(), 1);
  const Result r = run_cli({"mcmullen", "--R", "1e12"});
  ::unsetenv(cli::output_dir_env);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "cover.csv"));
}

TEST(Cli, RerunsAreByteIdentical) {
  const fs::path dir = scratch("rerun");
  const std::vector<std::string> grid{"grid", "--nx", "40", "--ny", "30", "--horizon", "1", "--out", dir.string()};
  auto with_jobs = [&](const char* jobs) {
    auto args = grid;
    args.insert(args.end(), {"--jobs", jobs});
    return args;
  };
  ASSERT_EQ(run_cli(with_jobs("1")).code, 0);
  const auto first = snapshot(dir);
  ASSERT_EQ(run_cli(with_jobs("3")).code, 0);
  EXPECT_EQ(snapshot(dir), first);
  EXPECT_EQ(first.size(), 3u);
}

TEST(Cli, ExperimentFromConfigWithSeedOverride) {
  const fs::path dir = scratch("experiment");
  const fs::path config = scratch("experiment.json");
  ASSERT_EQ(run_cli({"defaults", "--write", config.string()}).code, 0);
  ExperimentConfig c = load_config(config);
  c.atlas_rings = 150;
  c.nx = 32;
  c.ny = 32;
  c.output_dir = dir.string();
  save_config(c, config);
  const Result r = run_cli({"experiment", "--config", config.string(), "--seed", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("formula_value: 1\n"), std::string::npos);
  EXPECT_NE(r.out.find("time atlas: "), std::string::npos);
  EXPECT_EQ(load_config(dir / "config.json").seed, 7u);
  EXPECT_EQ(io::read_file(dir / "report.txt").find("time "), std::string::npos);
}

TEST(Cli, DefaultsPrintsSchemaVersionedConfig) {
  const Result r = run_cli({"defaults"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, config_to_text(ExperimentConfig{}));
  EXPECT_NO_THROW(config_from_json(nlohmann::json::parse(r.out)));
}

// Every flag in a subcommand's --help appears in the README table for that
// subcommand with the same default, and vice versa.
TEST(CliDocs, ReadmeFlagTablesMatchHelp) {
  const std::string readme = io::read_file(fs::path(ESCDIM_SOURCE_DIR) / "README.md");
  for (const std::string& sub : kSubcommands) {
    const Result help = run_cli({sub, "--help"});
    ASSERT_EQ(help.code, 0) << sub;
    const auto from_help = help_flags(help.out);
    const auto from_readme = readme_flags(readme, sub);
    EXPECT_FALSE(from_help.empty()) << sub;
    EXPECT_EQ(from_readme, from_help) << "flag table for " << sub << " is out of date";
    for (const auto& [flag, value] : from_help) {
      EXPECT_NE(help.out.find(flag), std::string::npos);
    }
  }
}
