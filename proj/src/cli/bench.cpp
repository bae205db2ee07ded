#include "lkreg/cli.hpp"

#include "lkreg/errors.hpp"
#include "lkreg/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>

namespace lkreg::cli {

namespace {

struct Job {
  std::string condition;
  std::string method;
  std::size_t pair = 0;
  std::function<RegistrationResult()> run;
  const RigidTransform* gt = nullptr;
};

struct Row {
  std::string condition;
  std::string method;
  std::size_t pair = 0;
  std::optional<PairError> error;
  RegistrationResult result;
  double seconds = 0.0;
  std::string status = "ok";
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<Row> execute(std::vector<Job>& jobs) {
  std::vector<Row> rows(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    Row& r = rows[i];
    r.condition = jobs[i].condition;
    r.method = jobs[i].method;
    r.pair = jobs[i].pair;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.result = jobs[i].run();
      r.error = pair_error(r.result.estimate, *jobs[i].gt);
    } catch (const std::exception& e) {
      r.status = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  return rows;
}

struct Group {
  std::string condition;
  std::string method;
  std::vector<PairError> errors;  // completed pairs
  std::size_t failures = 0;
};

// Groups in order of first appearance.
std::vector<Group> group_rows(const std::vector<Row>& rows) {
  std::vector<Group> groups;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const Row& r : rows) {
    const auto key = std::make_pair(r.condition, r.method);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.push_back({r.condition, r.method, {}, 0});
    }
    Group& g = groups[it->second];
    if (r.error) {
      g.errors.push_back(*r.error);
    } else {
      ++g.failures;
    }
  }
  return groups;
}

void write_pairs(const std::filesystem::path& path, const std::string& suite, const std::vector<Row>& rows,
                 bool timing) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "suite,condition,pair,method,rot_err_deg,trans_err,iterations,termination,jacobian_builds,seconds,status\n";
  for (const Row& r : rows) {
    out << suite << ',' << csv_field(r.condition) << ',' << r.pair << ',' << r.method << ',';
    if (r.error) {
      out << num(r.error->rot_deg) << ',' << num(r.error->trans) << ',' << r.result.iterations << ','
          << to_string(r.result.termination) << ',' << r.result.jacobian_builds;
    } else {
      out << ",,,,";
    }
    out << ',' << (timing ? num(r.seconds) : std::string()) << ',' << csv_field(r.status) << '\n';
  }
}

struct Summary {
  Group group;
  Aggregate agg;
  double success_all = 0.0;  // failures count as unsuccessful
  double auc = 0.0;          // joint sweep
  double auc_rot = 0.0;
  double auc_trans = 0.0;
};

std::vector<Summary> summarize(const std::vector<Row>& rows, const BenchSettings& s) {
  std::vector<Summary> out;
  for (Group& g : group_rows(rows)) {
    Summary sm;
    const std::size_t total = g.errors.size() + g.failures;
    if (!g.errors.empty()) {
      sm.agg = aggregate(g.errors, s.criterion);
      sm.success_all = sm.agg.success_ratio * static_cast<double>(g.errors.size()) / static_cast<double>(total);
      sm.auc = auc(success_curve(g.errors, s.criterion, CurveAxis::kJoint, s.curve_samples));
      sm.auc_rot = auc(success_curve(g.errors, s.criterion, CurveAxis::kRotation, s.curve_samples));
      sm.auc_trans = auc(success_curve(g.errors, s.criterion, CurveAxis::kTranslation, s.curve_samples));
    }
    sm.group = std::move(g);
    out.push_back(std::move(sm));
  }
  return out;
}

void write_aggregate(const std::filesystem::path& csv, const std::filesystem::path& json, const std::string& suite,
                     const std::vector<Summary>& summaries) {
  std::ofstream out(csv);
  if (!out) throw Error("cannot write " + csv.string());
  out << "suite,condition,method,count,failures,rmse_rot_deg,median_rot_deg,rmse_trans,median_trans,success_ratio,"
         "auc,auc_rot,auc_trans\n";
  nlohmann::json arr = nlohmann::json::array();
  for (const Summary& s : summaries) {
    const bool any = !s.group.errors.empty();
    auto cell = [&](double v) { return any ? num(v) : std::string(); };
    out << suite << ',' << csv_field(s.group.condition) << ',' << s.group.method << ','
        << s.group.errors.size() + s.group.failures << ',' << s.group.failures << ',' << cell(s.agg.rmse_rot) << ','
        << cell(s.agg.median_rot) << ',' << cell(s.agg.rmse_trans) << ',' << cell(s.agg.median_trans) << ','
        << num(s.success_all) << ',' << cell(s.auc) << ',' << cell(s.auc_rot) << ',' << cell(s.auc_trans) << '\n';
    nlohmann::json j{{"suite", suite},
                     {"condition", s.group.condition},
                     {"method", s.group.method},
                     {"count", s.group.errors.size() + s.group.failures},
                     {"failures", s.group.failures},
                     {"success_ratio", s.success_all}};
    if (any) {
      j["rmse_rot_deg"] = s.agg.rmse_rot;
      j["median_rot_deg"] = s.agg.median_rot;
      j["rmse_trans"] = s.agg.rmse_trans;
      j["median_trans"] = s.agg.median_trans;
      j["auc"] = s.auc;
      j["auc_rot"] = s.auc_rot;
      j["auc_trans"] = s.auc_trans;
    }
    arr.push_back(std::move(j));
  }
  std::ofstream js(json);
  if (!js) throw Error("cannot write " + json.string());
  js << arr.dump(2) << '\n';
}

std::string solver_label(const SolverConfig& c) {
  if (c.method == JacobianMethod::kNumerical) return "numerical(t=" + num(c.step) + ")";
  return "analytical";
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return a * 0x9E3779B97F4A7C15ULL + b + 1; }

}  // namespace

BenchOutputs run_bench(const std::string& suite, const BenchSettings& s, const FeatureNet& net,
                       const std::filesystem::path& out_dir) {
  if (std::find(kSuites.begin(), kSuites.end(), suite) == kSuites.end()) throw ConfigError("unknown suite " + suite);
  s.solver.validate();
  s.icp.validate();
  const std::vector<PairSpec> pairs = make_bench_pairs(s);

  // Corrupted variants must outlive the jobs that reference them.
  std::vector<std::unique_ptr<PairSpec>> owned;
  std::vector<Job> jobs;
  auto add_solver = [&](const std::string& condition, const PairSpec& p, std::size_t i, const SolverConfig& cfg) {
    jobs.push_back({condition, solver_label(cfg), i,
                    [&net, &p, cfg] { return register_clouds(net, p.source, p.templ, cfg); }, &p.gt});
  };
  auto corrupted = [&](const PairSpec& p, PointCloud templ) -> const PairSpec& {
    owned.push_back(std::make_unique<PairSpec>(PairSpec{p.source, std::move(templ), p.gt}));
    return *owned.back();
  };

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PairSpec& p = pairs[i];
    const std::uint64_t seed = mix(s.corruption_seed, i);
    if (suite == "accuracy") {
      add_solver("", p, i, s.solver);
    } else if (suite == "fidelity") {
      SolverConfig a = s.solver;
      a.method = JacobianMethod::kAnalytical;
      add_solver("", p, i, a);
      for (double t : s.fidelity_steps) {
        SolverConfig n = s.solver;
        n.method = JacobianMethod::kNumerical;
        n.step = t;
        add_solver("", p, i, n);
      }
    } else if (suite == "noise") {
      for (double sd : s.noise_stddevs)
        add_solver("stddev=" + num(sd), sd > 0.0 ? corrupted(p, corrupt_noise(p.templ, sd, seed)) : p, i, s.solver);
    } else if (suite == "sparsity") {
      for (double k : s.sparsity_keep)
        add_solver("keep=" + num(k), k < 1.0 ? corrupted(p, corrupt_sparsify(p.templ, k, seed)) : p, i, s.solver);
    } else if (suite == "partial") {
      Rng rng(seed);
      std::normal_distribution<double> g(0.0, 1.0);
      const Vec3 dir = Vec3(g(rng), g(rng), g(rng)).normalized();
      for (double k : s.partial_keep)
        add_solver("keep=" + num(k), k < 1.0 ? corrupted(p, corrupt_halfspace(p.templ, dir, k)) : p, i, s.solver);
    } else if (suite == "voxel") {
      add_solver("whole", p, i, s.solver);
      for (const auto& dims : s.voxel_grids) {
        for (int cap : s.voxel_caps) {
          VoxelConfig vc;
          vc.dims = dims;
          vc.max_points_per_voxel = cap;
          vc.min_points = std::min(s.voxel_min_points, cap);
          vc.seed = s.voxel_seed;
          const std::string cond = "grid=" + std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
                                   std::to_string(dims[2]) + " cap=" + std::to_string(cap);
          const SolverConfig cfg = s.solver;
          jobs.push_back({cond, "voxelized", i,
                          [&net, &p, cfg, vc] { return register_voxelized(net, p.source, p.templ, cfg, vc); },
                          &p.gt});
        }
      }
    } else if (suite == "icp-compare") {
      add_solver("", p, i, s.solver);
      const IcpConfig icp = s.icp;
      jobs.push_back({"", "icp", i, [&p, icp] { return icp_register(p.source, p.templ, icp); }, &p.gt});
    }
  }

  const std::vector<Row> rows = execute(jobs);
  std::filesystem::create_directories(out_dir);
  BenchOutputs out;
  out.pairs_csv = out_dir / (suite + "_pairs.csv");
  out.aggregate_csv = out_dir / (suite + "_aggregate.csv");
  out.aggregate_json = out_dir / (suite + "_aggregate.json");
  write_pairs(out.pairs_csv, suite, rows, s.timing);
  const std::vector<Summary> summaries = summarize(rows, s);
  write_aggregate(out.aggregate_csv, out.aggregate_json, suite, summaries);

  if (suite == "fidelity") {
    out.curve_csv = out_dir / (suite + "_curve.csv");
    std::ofstream c(*out.curve_csv);
    if (!c) throw Error("cannot write " + out.curve_csv->string());
    c << "method,threshold_deg,success_ratio\n";
    for (const Summary& sm : summaries) {
      const std::size_t total = sm.group.errors.size() + sm.group.failures;
      for (int k = 0; k < s.fidelity_samples; ++k) {
        const double th = s.fidelity_max_deg * k / (s.fidelity_samples - 1);
        std::size_t hit = 0;
        for (const PairError& e : sm.group.errors) hit += e.rot_deg < th ? 1 : 0;
        c << sm.group.method << ',' << num(th) << ',' << num(static_cast<double>(hit) / static_cast<double>(total))
          << '\n';
      }
    }
  }
  return out;
}

}  // namespace lkreg::cli
