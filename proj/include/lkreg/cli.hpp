#pragma once

#include "lkreg/icp.hpp"
#include "lkreg/solver.hpp"
#include "lkreg/trainer.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace lkreg::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;      // usage, I/O, schema
inline constexpr int kExitNumerical = 2;  // diverged or rank-deficient

// ---------------------------------------------------------------------------
// Config files

/// TOML subset: comments, [table] / [a.b] headers, key = value with strings,
/// integers, floats, booleans and (nested, possibly multi-line) arrays.
/// Inline tables, arrays of tables and dates are rejected with ConfigError.
nlohmann::json parse_toml(std::string_view text);

/// .toml is parsed as TOML, .json as JSON; any other extension tries JSON
/// first and falls back to TOML.
nlohmann::json load_config(const std::filesystem::path& path);

/// Typed access to a JSON object that remembers the dotted path of every
/// field for error messages and rejects keys nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& node, std::string path);

  bool has(const std::string& key) const;
  Section child(const std::string& key) const;  // empty section when absent

  double number(const std::string& key, double fallback, double min, double max = HUGE_VAL,
                bool min_exclusive = false);
  long integer(const std::string& key, long fallback, long min, long max = std::numeric_limits<long>::max());
  bool boolean(const std::string& key, bool fallback);
  std::string string(const std::string& key, const std::string& fallback, const std::set<std::string>& allowed = {});
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback, double min,
                              double max = HUGE_VAL);
  std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& fallback);
  const nlohmann::json* raw(const std::string& key);

  /// Throws ConfigError naming the first key that was never read.
  void finish() const;
  std::string field(const std::string& key) const;

 private:
  nlohmann::json node_;
  std::string path_;
  mutable std::set<std::string> used_;
};

struct TrainSettings {
  DatasetConfig dataset;
  TrainConfig train;
  std::vector<int> widths{3, 64, 128, 1024};
  std::uint64_t model_seed = 0;
  std::string checkpoint = "checkpoint.json";
  std::string log = "train_log.csv";
};

TrainSettings parse_train_settings(const nlohmann::json& config);

/// Parameters shared by the benchmark suites.
struct BenchSettings {
  enum class Source { kPrimitives, kScenes };
  Source source = Source::kPrimitives;
  DatasetConfig dataset;
  int scene_objects = 3;
  SolverConfig solver;
  IcpConfig icp;
  SuccessCriterion criterion;
  int curve_samples = 64;
  bool timing = true;
  // fidelity
  double fidelity_max_deg = 1e-5;
  int fidelity_samples = 11;
  std::vector<double> fidelity_steps{1e-2};
  // robustness grids
  std::vector<double> noise_stddevs{0.0, 0.01, 0.02, 0.04};
  std::vector<double> sparsity_keep{1.0, 0.5, 0.25, 0.1};
  std::vector<double> partial_keep{1.0, 0.8, 0.7, 0.6};
  std::uint64_t corruption_seed = 0;
  // voxel
  std::vector<std::array<int, 3>> voxel_grids{{1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  std::vector<int> voxel_caps{1000, 500, 148, 125, 37};
  int voxel_min_points = 16;
  std::uint64_t voxel_seed = 0;
};

BenchSettings parse_bench_settings(const nlohmann::json& config);

std::vector<PairSpec> make_bench_pairs(const BenchSettings& s);

// ---------------------------------------------------------------------------
// Commands (used by the executable and by tests)

inline const std::vector<std::string> kSuites{"accuracy", "fidelity", "noise",      "sparsity",
                                              "partial",  "voxel",    "icp-compare"};

struct BenchOutputs {
  std::filesystem::path pairs_csv;
  std::filesystem::path aggregate_csv;
  std::filesystem::path aggregate_json;
  std::optional<std::filesystem::path> curve_csv;
};

/// Runs one suite and writes <out_dir>/<suite>_{pairs,aggregate}.csv,
/// <suite>_aggregate.json and, for fidelity, <suite>_curve.csv.
BenchOutputs run_bench(const std::string& suite, const BenchSettings& settings, const FeatureNet& net,
                       const std::filesystem::path& out_dir);

/// Full command line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace lkreg::cli
