#include "lkreg/cli.hpp"

#include "lkreg/errors.hpp"
#include "lkreg/parallel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace lkreg::cli {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream s(text);
  for (std::string item; std::getline(s, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidArgument(what + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw InvalidArgument(what + " must not be empty");
  return out;
}

std::filesystem::path state_path(const std::string& checkpoint) { return checkpoint + ".state"; }

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  bool resume = false;
  int epochs = 0;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  TrainSettings s = parse_train_settings(load_config(a.config));
  if (a.seed) {
    s.model_seed = *a.seed;
    s.dataset.seed = *a.seed + 1;
    s.train.seed = *a.seed + 2;
  }
  if (a.epochs > 0) s.train.epochs = a.epochs;

  FeatureNet net;
  TrainerState state;
  if (a.resume) {
    net = load_weights(s.checkpoint);
    if (net.widths() != s.widths) throw ConfigError("model.widths: checkpoint has a different architecture");
    state = load_trainer_state(state_path(s.checkpoint), net);
  } else {
    net = FeatureNet::create(s.widths, s.model_seed);
    state.adam = AdamState::for_net(net);
    state.rng = Rng(s.train.seed);
  }
  const std::vector<PairSpec> data = make_dataset(s.dataset);

  std::ofstream log(s.log, a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error("cannot write " + s.log);
  if (!a.resume) log << "epoch,loss_transform,loss_feature,loss_total,success_ratio,pairs,skipped\n";
  for (int e = 0; e < s.train.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochStats st = train_epoch(net, data, s.train, state.adam, state.rng);
    st.epoch = ++state.epoch;
    log << st.epoch << ',' << num(st.loss_transform) << ',' << num(st.loss_feature) << ',' << num(st.loss_total)
        << ',' << num(st.success_ratio) << ',' << st.pairs << ',' << st.skipped << '\n';
    log.flush();
    save_weights(net, s.checkpoint);
    save_trainer_state(state, state_path(s.checkpoint));
    std::fprintf(stderr, "epoch %d: L_G %.5g  L_phi %.5g  success %.3f  (%.1f s)\n", st.epoch, st.loss_transform,
                 st.loss_feature, st.success_ratio,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RegisterArgs {
  std::string model, source, templ;
  std::string voxels;
  int voxel_cap = 1000;
  int min_points = 16;
  std::string method = "analytical";
  double step = 1e-2;
  std::string precision = "single";
  bool planar = false;
  int max_iters = 10;
  double dx_tol = 1e-7;
};

int cmd_register(const RegisterArgs& a) {
  const FeatureNet net = load_weights(a.model);
  const PointCloud source = load_cloud(a.source);
  const PointCloud templ = load_cloud(a.templ);
  SolverConfig cfg;
  cfg.max_iters = a.max_iters;
  cfg.dx_tol = a.dx_tol;
  cfg.method = a.method == "numerical" ? JacobianMethod::kNumerical : JacobianMethod::kAnalytical;
  cfg.step = a.step;
  cfg.precision = a.precision == "double" ? Precision::kDouble : Precision::kSingle;
  cfg.warp = a.planar ? WarpModel::kPlanar3 : WarpModel::kRigid6;

  RegistrationResult r;
  if (!a.voxels.empty()) {
    if (a.method != "analytical") throw InvalidArgument("--voxels uses the analytical Jacobian only");
    const auto dims = parse_list(a.voxels, "--voxels");
    if (dims.size() != 3) throw InvalidArgument("--voxels expects nx,ny,nz");
    VoxelConfig vc;
    for (int i = 0; i < 3; ++i) {
      if (dims[static_cast<std::size_t>(i)] < 1 || dims[static_cast<std::size_t>(i)] != std::floor(dims[static_cast<std::size_t>(i)]))
        throw InvalidArgument("--voxels entries must be positive integers");
      vc.dims[static_cast<std::size_t>(i)] = static_cast<int>(dims[static_cast<std::size_t>(i)]);
    }
    vc.max_points_per_voxel = a.voxel_cap;
    vc.min_points = a.min_points;
    r = register_voxelized(net, source, templ, cfg, vc);
  } else {
    r = register_clouds(net, source, templ, cfg);
  }
  std::cout << result_to_json(r) << '\n';
  const bool failed = r.termination == Termination::kDiverged || r.termination == Termination::kRankDeficient;
  if (failed) std::cerr << "registration " << to_string(r.termination) << ": " << r.message << '\n';
  return failed ? kExitNumerical : kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string suite;
  std::string config;
  std::string model;
  std::string out = "bench_out";
  bool no_timing = false;
  std::optional<std::uint64_t> seed;
};

int cmd_bench(const BenchArgs& a) {
  BenchSettings s = parse_bench_settings(a.config.empty() ? nlohmann::json::object() : load_config(a.config));
  if (a.no_timing) s.timing = false;
  if (a.seed) s.dataset.seed = *a.seed;
  const FeatureNet net = load_weights(a.model);
  const BenchOutputs out = run_bench(a.suite, s, net, a.out);
  std::cout << out.pairs_csv.string() << '\n' << out.aggregate_csv.string() << '\n' << out.aggregate_json.string() << '\n';
  if (out.curve_csv) std::cout << out.curve_csv->string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AnalysisArgs {
  std::string model;
  std::string cloud;
  std::string steps = "1e-10,1e-4,1e-2,1,10";
  std::string precision = "single";
  std::string out;
};

int cmd_jacobian_analysis(const AnalysisArgs& a) {
  const FeatureNet net = load_weights(a.model);
  const PointCloud cloud = load_cloud(a.cloud);
  const std::vector<double> steps = parse_list(a.steps, "--steps");
  for (double t : steps)
    if (!(t > 0.0)) throw InvalidArgument("--steps entries must be > 0");
  const Precision prec = a.precision == "double" ? Precision::kDouble : Precision::kSingle;

  const Eigen::MatrixXd ja = pooled_jacobian(net, cloud.points());
  std::vector<Eigen::MatrixXd> jn;
  for (double t : steps) jn.push_back(numerical_jacobian_matrix(net, cloud.points(), t, prec));

  std::ofstream csv(a.out);
  if (!csv) throw Error("cannot write " + a.out);
  csv << "entry,feature,param,analytical";
  for (double t : steps) csv << ",numerical_t=" << num(t);
  csv << '\n';
  for (Eigen::Index p = 0; p < ja.cols(); ++p) {
    for (Eigen::Index k = 0; k < ja.rows(); ++k) {
      csv << p * ja.rows() + k << ',' << k << ',' << p << ',' << num(ja(k, p));
      for (const auto& j : jn) csv << ',' << num(j(k, p));
      csv << '\n';
    }
  }

  const Eigen::VectorXd flat_a = Eigen::Map<const Eigen::VectorXd>(ja.data(), ja.size());
  std::cout << "step,pearson_all,pearson_wz\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Eigen::VectorXd flat_n = Eigen::Map<const Eigen::VectorXd>(jn[i].data(), jn[i].size());
    const double all = flat_a.size() >= 2 ? pearson(flat_a, flat_n) : 0.0;
    const double wz = ja.rows() >= 2 ? pearson(ja.col(2), jn[i].col(2)) : 0.0;
    std::cout << num(steps[i]) << ',' << num(all) << ',' << num(wz) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string kind = "cube";
  int points = 1000;
  std::uint64_t seed = 0;
  bool varied = false;
  int scene = 0;
  bool normalize = true;
  std::string out;
  std::string template_out;
  std::string gt_out;
  double rot_deg = 30.0;
  double trans = 0.3;
};

int cmd_generate(const GenerateArgs& a) {
  PointCloud cloud = a.scene > 0 ? generate_scene(a.scene, a.points, a.seed)
                     : a.varied  ? generate_varied_primitive(parse_primitive(a.kind), a.points, a.seed)
                                 : generate_primitive(parse_primitive(a.kind), a.points, a.seed);
  if (a.normalize && a.scene == 0) cloud = normalize_unit_box(cloud);
  save_cloud(cloud, a.out);
  if (!a.template_out.empty()) {
    Rng rng(a.seed ^ 0xA5A5A5A5ULL);
    const RigidTransform gt = se3::exp(sample_perturbation(rng, a.rot_deg, a.trans));
    save_cloud(apply(gt, cloud), a.template_out);
    if (!a.gt_out.empty()) {
      std::vector<double> m;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m.push_back(gt.matrix()(r, c));
      std::ofstream g(a.gt_out);
      if (!g) throw Error("cannot write " + a.gt_out);
      g << nlohmann::json{{"gt", m}}.dump(2) << '\n';
    }
  }
  return kExitOk;
}

struct InitArgs {
  std::string widths = "3,64,128,1024";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_init_model(const InitArgs& a) {
  std::vector<int> widths;
  for (double w : parse_list(a.widths, "--widths")) {
    if (w < 1 || w != std::floor(w)) throw InvalidArgument("--widths entries must be positive integers");
    widths.push_back(static_cast<int>(w));
  }
  save_weights(FeatureNet::create(widths, a.seed), a.out);
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Feature-based rigid point cloud registration with analytical Jacobians"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lkreg 1.0");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a feature network on generated primitive pairs");
  t->add_option("--config", train.config, "TOML or JSON config")->required()->check(CLI::ExistingFile);
  t->add_flag("--resume", train.resume, "Continue from the configured checkpoint");
  t->add_option("--epochs", train.epochs, "Override train.epochs (epochs to run in this invocation)")
      ->check(CLI::PositiveNumber);
  t->add_option("--seed", train.seed, "Override model, dataset and shuffle seeds");

  RegisterArgs reg;
  auto* r = app.add_subcommand("register", "Register a source cloud onto a template");
  r->add_option("--model", reg.model, "Network weights (JSON)")->required();
  r->add_option("--source", reg.source, "Source cloud (.xyz/.off/.ply)")->required();
  r->add_option("--template", reg.templ, "Template cloud (.xyz/.off/.ply)")->required();
  r->add_option("--voxels", reg.voxels, "Voxel grid nx,ny,nz for the voxelized solver");
  r->add_option("--voxel-cap", reg.voxel_cap, "Max points per voxel")->check(CLI::PositiveNumber);
  r->add_option("--min-points", reg.min_points, "Min points for a voxel to count")->check(CLI::Range(4, 1 << 30));
  r->add_option("--method", reg.method, "Jacobian")->check(CLI::IsMember({"analytical", "numerical"}));
  r->add_option("--step", reg.step, "Finite-difference step for --method numerical")->check(CLI::PositiveNumber);
  r->add_option("--precision", reg.precision, "Arithmetic of the numerical Jacobian")
      ->check(CLI::IsMember({"single", "double"}));
  r->add_flag("--planar", reg.planar, "3-DoF planar warp (rotation about z, translation in x, y)");
  r->add_option("--max-iters", reg.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  r->add_option("--dx-tol", reg.dx_tol, "Stop when the increment norm falls below this")
      ->check(CLI::PositiveNumber);

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Run a benchmark suite on generated data");
  b->add_option("--suite", bench.suite, "Suite")->required()->check(CLI::IsMember(kSuites));
  b->add_option("--config", bench.config, "TOML or JSON suite config")->check(CLI::ExistingFile);
  b->add_option("--model", bench.model, "Network weights (JSON)")->required();
  b->add_option("--out", bench.out, "Output directory");
  b->add_flag("--no-timing", bench.no_timing, "Leave the seconds column empty (byte-stable output)");
  b->add_option("--seed", bench.seed, "Override dataset.seed");

  AnalysisArgs an;
  auto* j = app.add_subcommand("jacobian-analysis", "Numerical versus analytical Jacobian entries per step size");
  j->add_option("--model", an.model, "Network weights (JSON)")->required();
  j->add_option("--cloud", an.cloud, "Cloud at which to linearize")->required();
  j->add_option("--steps", an.steps, "Comma-separated step sizes");
  j->add_option("--precision", an.precision, "Arithmetic of the numerical Jacobian")
      ->check(CLI::IsMember({"single", "double"}));
  j->add_option("--out", an.out, "Scatter CSV")->required();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic cloud and optionally a perturbed template");
  g->add_option("--kind", gen.kind, "sphere, cube, cylinder, torus or plane-with-bumps");
  g->add_option("--points", gen.points, "Point count")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Seed");
  g->add_flag("--varied", gen.varied, "Random anisotropic scale and orientation");
  g->add_option("--scene", gen.scene, "Compose this many primitives instead of one")->check(CLI::NonNegativeNumber);
  g->add_flag("!--no-normalize", gen.normalize, "Keep the raw primitive scale");
  g->add_option("--out", gen.out, "Output cloud")->required();
  g->add_option("--template-out", gen.template_out, "Also write a randomly perturbed copy");
  g->add_option("--gt-out", gen.gt_out, "Ground-truth transform of the perturbed copy (JSON)");
  g->add_option("--rot-deg", gen.rot_deg, "Max perturbation angle")->check(CLI::Range(0.0, 179.999));
  g->add_option("--trans", gen.trans, "Max perturbation translation")->check(CLI::NonNegativeNumber);

  InitArgs init;
  auto* i = app.add_subcommand("init-model", "Write an untrained network");
  i->add_option("--widths", init.widths, "Layer widths starting with 3");
  i->add_option("--seed", init.seed, "Seed");
  i->add_option("--out", init.out, "Output weights")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train);
    if (r->parsed()) return cmd_register(reg);
    if (b->parsed()) return cmd_bench(bench);
    if (j->parsed()) return cmd_jacobian_analysis(an);
    if (g->parsed()) return cmd_generate(gen);
    if (i->parsed()) return cmd_init_model(init);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace lkreg::cli
