#include "lkreg/trainer.hpp"

#include "lkreg/errors.hpp"
#include "lkreg/jacobian.hpp"
#include "lkreg/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lkreg {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (unroll < 1) throw ConfigError("unroll must be >= 1");
  if (!(lambda_transform >= 0.0) || !(lambda_feature >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must lie in [0, 1)");
}

void DatasetConfig::validate() const {
  if (pairs < 1) throw ConfigError("pairs must be >= 1");
  if (points < 8) throw ConfigError("points must be >= 8");
  if (!(max_rot_deg >= 0.0 && max_rot_deg < 180.0)) throw ConfigError("max_rot_deg must lie in [0, 180)");
  if (!(max_trans >= 0.0)) throw ConfigError("max_trans must be >= 0");
  if (kinds.empty()) throw ConfigError("kinds must not be empty");
}

std::vector<PairSpec> make_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<PairSpec> out;
  out.reserve(static_cast<std::size_t>(cfg.pairs));
  for (int i = 0; i < cfg.pairs; ++i) {
    const PrimitiveKind kind = cfg.kinds[static_cast<std::size_t>(i) % cfg.kinds.size()];
    const std::uint64_t shape_seed = rng();
    PointCloud raw = cfg.varied ? generate_varied_primitive(kind, cfg.points, shape_seed)
                                : generate_primitive(kind, cfg.points, shape_seed);
    PointCloud source = normalize_unit_box(raw);
    const RigidTransform gt = se3::exp(sample_perturbation(rng, cfg.max_rot_deg, cfg.max_trans));
    PointCloud templ = apply(gt, source);
    out.push_back({std::move(source), std::move(templ), gt});
  }
  return out;
}

AdamState AdamState::for_net(const FeatureNet& net) {
  AdamState s;
  s.m = ParamSet::zeros_like(net);
  s.v = ParamSet::zeros_like(net);
  return s;
}

double loss_transform(const RigidTransform& est, const RigidTransform& gt) {
  // est gt^-1 - I = (est - gt) gt^-1, exactly zero when est == gt.
  return ((est.matrix() - gt.matrix()) * se3::inverse(gt).matrix()).squaredNorm();
}

double loss_feature(const FeatureNet& net, const RigidTransform& est, const PointCloud& templ,
                    const PointCloud& source) {
  const Eigen::VectorXd a = global_feature(net, se3::apply(se3::inverse(est), templ.points()));
  return (a - global_feature(net, source)).squaredNorm();
}

namespace {

// Forward trace of the unrolled solve; kept for the reverse pass.
struct Trace {
  Activations templ;
  std::vector<Activations> steps;     // phi at X_i = g_{i-1} P_S, i = 1..unroll
  std::vector<Points> inputs;         // X_i
  std::vector<Twist> increments;      // dxi_i
  std::vector<RigidTransform> poses;  // g_0 .. g_unroll
  Activations back;                   // phi at Y = g^-1 P_T
  Points back_input;
  PairLoss loss;
};

Trace run_forward(const FeatureNet& net, const PairSpec& pair, const Eigen::MatrixXd& pinv, const TrainConfig& cfg,
                  bool keep) {
  Trace t;
  t.templ = forward(net, pair.templ.points());
  t.poses.emplace_back();
  for (int i = 0; i < cfg.unroll; ++i) {
    Points x = i == 0 ? pair.source.points() : se3::apply(t.poses.back(), pair.source.points());
    Activations a = forward(net, x);
    const Eigen::VectorXd r = a.global - t.templ.global;
    const Twist dxi(Vec6(pinv * r));
    t.poses.push_back(se3::compose(se3::exp(dxi), t.poses.back()));
    t.increments.push_back(dxi);
    if (keep || i == 0) {
      t.steps.push_back(std::move(a));
      t.inputs.push_back(std::move(x));
    }
  }
  const RigidTransform& est = t.poses.back();
  t.back_input = se3::apply(se3::inverse(est), pair.templ.points());
  t.back = forward(net, t.back_input);
  t.loss.estimate = est;
  t.loss.transform = loss_transform(est, pair.gt);
  t.loss.feature = (t.back.global - t.steps.front().global).squaredNorm();
  t.loss.total = cfg.lambda_transform * t.loss.transform + cfg.lambda_feature * t.loss.feature;
  return t;
}

}  // namespace

PairLoss unrolled_loss(const FeatureNet& net, const PairSpec& pair, const Eigen::MatrixXd& pinv,
                       const TrainConfig& cfg) {
  return run_forward(net, pair, pinv, cfg, false).loss;
}

PairGradient unrolled_loss_gradient(const FeatureNet& net, const PairSpec& pair, const Eigen::MatrixXd& pinv,
                                    const TrainConfig& cfg) {
  if (pinv.rows() != 6) throw InvalidArgument("training expects a 6-DoF pseudoinverse");
  Trace t = run_forward(net, pair, pinv, cfg, true);
  const int n = cfg.unroll;
  const Eigen::Index k = net.feature_dim();

  PairGradient out{t.loss, ParamSet::zeros_like(net)};
  std::vector<Eigen::VectorXd> up(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(k));
  Eigen::VectorXd up_templ = Eigen::VectorXd::Zero(k);
  std::vector<Mat4> pose_grad(static_cast<std::size_t>(n + 1), Mat4::Zero());

  // Transformation loss: d/dg ||g gt^-1 - I||^2 = 2 (g gt^-1 - I) gt^-T.
  const Mat4 gt_inv = se3::inverse(pair.gt).matrix();
  const RigidTransform& est = t.poses.back();
  pose_grad.back() += 2.0 * cfg.lambda_transform * ((est.matrix() - pair.gt.matrix()) * gt_inv) * gt_inv.transpose();

  // Feature loss through Y = R^T (P_T - t).
  const Eigen::VectorXd e = t.back.global - t.steps.front().global;
  up.front() -= 2.0 * cfg.lambda_feature * e;
  {
    const Backprop bp = param_gradient(net, t.back_input, t.back, 2.0 * cfg.lambda_feature * e);
    out.grad += bp.params;
    const Points centered = pair.templ.points().colwise() - est.translation();
    pose_grad.back().topLeftCorner<3, 3>() += centered * bp.input.transpose();
    pose_grad.back().topRightCorner<3, 1>() += -(est.rotation() * bp.input.rowwise().sum());
  }

  for (int i = n; i >= 1; --i) {
    const auto si = static_cast<std::size_t>(i);
    // g_i = E_i g_{i-1}
    const Mat4& prev = t.poses[si - 1].matrix();
    const Mat4 e_mat = se3::exp(t.increments[si - 1]).matrix();
    const Mat4 d_e = pose_grad[si] * prev.transpose();
    pose_grad[si - 1] += e_mat.transpose() * pose_grad[si];
    const auto de = se3::exp_derivatives(t.increments[si - 1]);
    Vec6 d_xi;
    for (int p = 0; p < 6; ++p) d_xi[p] = d_e.cwiseProduct(de[static_cast<std::size_t>(p)]).sum();
    const Eigen::VectorXd d_r = pinv.transpose() * d_xi;
    up[si - 1] += d_r;
    up_templ -= d_r;

    const Backprop bp = param_gradient(net, t.inputs[si - 1], t.steps[si - 1], up[si - 1]);
    out.grad += bp.params;
    if (i >= 2) {
      // X_i = g_{i-1} P_S
      pose_grad[si - 1].topLeftCorner<3, 3>() += bp.input * pair.source.points().transpose();
      pose_grad[si - 1].topRightCorner<3, 1>() += bp.input.rowwise().sum();
    }
  }
  out.grad += param_gradient(net, pair.templ.points(), t.templ, up_templ).params;
  return out;
}

void adam_step(FeatureNet& net, const ParamSet& grad, AdamState& s, const TrainConfig& cfg) {
  ++s.step;
  const double b1 = s.beta1, b2 = s.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
  double lr = cfg.learning_rate;
  if (cfg.decay_mode == DecayMode::kLearningRate) lr /= 1.0 + cfg.weight_decay * static_cast<double>(s.step);
  const double decay = cfg.decay_mode == DecayMode::kDecoupled ? cfg.learning_rate * cfg.weight_decay : 0.0;

  ParamSet theta = ParamSet::from(net);
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const auto step = ((m.array() / c1) / ((v.array() / c2).sqrt() + s.eps)).matrix();
    p = p - decay * p - lr * step;
  };
  for (std::size_t l = 0; l < theta.layers.size(); ++l) {
    LayerParams& p = theta.layers[l];
    const LayerParams& g = grad.layers[l];
    LayerParams& m = s.m.layers[l];
    LayerParams& v = s.v.layers[l];
    update(p.weight, g.weight, m.weight, v.weight);
    update(p.bias, g.bias, m.bias, v.bias);
    update(p.bn_scale, g.bn_scale, m.bn_scale, v.bn_scale);
    update(p.bn_shift, g.bn_shift, m.bn_shift, v.bn_shift);
  }
  theta.write_to(net);
}

EpochStats train_epoch(FeatureNet& net, const std::vector<PairSpec>& data, const TrainConfig& cfg, AdamState& adam,
                       Rng& rng) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("training dataset is empty");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  std::vector<PairError> errors;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    std::vector<const Points*> clouds;
    for (std::size_t b = start; b < end; ++b) {
      clouds.push_back(&data[order[b]].source.points());
      clouds.push_back(&data[order[b]].templ.points());
    }
    const BatchStats bstats = batch_statistics(net, clouds);
    const FeatureNet working = with_statistics(net, bstats);

    const std::size_t count = end - start;
    std::vector<std::optional<PairGradient>> results(count);
    parallel_for(count, [&](std::size_t b) {
      const PairSpec& pair = data[order[start + b]];
      try {
        const JacobianBundle jac = analytical_jacobian(working, pair.templ);
        results[b] = unrolled_loss_gradient(working, pair, jac.pinv, cfg);
      } catch (const RankDeficient&) {
      }
    });

    ParamSet grad = ParamSet::zeros_like(net);
    int used = 0;
    for (std::size_t b = 0; b < count; ++b) {
      if (!results[b]) {
        ++stats.skipped;
        errors.push_back({180.0, std::numeric_limits<double>::infinity()});
        continue;
      }
      const PairGradient& r = *results[b];
      if (!std::isfinite(r.loss.total) || !r.grad.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite loss in epoch " << stats.epoch << " at pair " << order[start + b]
            << " (L_G = " << r.loss.transform << ", L_phi = " << r.loss.feature << ")";
        throw Error(msg.str());
      }
      grad += r.grad;
      stats.loss_transform += r.loss.transform;
      stats.loss_feature += r.loss.feature;
      errors.push_back(pair_error(r.loss.estimate, data[order[start + b]].gt));
      ++used;
    }
    update_running_statistics(net, bstats, cfg.bn_momentum);
    if (used > 0) {
      grad *= 1.0 / used;
      adam_step(net, grad, adam, cfg);
    }
    stats.pairs += used;
  }
  if (stats.pairs > 0) {
    stats.loss_transform /= stats.pairs;
    stats.loss_feature /= stats.pairs;
  }
  stats.loss_total = cfg.lambda_transform * stats.loss_transform + cfg.lambda_feature * stats.loss_feature;
  stats.success_ratio = success_ratio(errors, cfg.criterion);
  return stats;
}

namespace {

nlohmann::json flat(const ParamSet& p) {
  std::vector<double> v(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) v[static_cast<std::size_t>(i)] = p.at(i);
  return v;
}

void unflat(const nlohmann::json& j, ParamSet& p, const std::string& field) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(v.size()) != p.size()) throw ConfigError(field + " does not match network size");
  for (Eigen::Index i = 0; i < p.size(); ++i) p.at(i) = v[static_cast<std::size_t>(i)];
}

}  // namespace

void save_trainer_state(const TrainerState& state, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["epoch"] = state.epoch;
  j["adam"] = {{"step", state.adam.step},
               {"beta1", state.adam.beta1},
               {"beta2", state.adam.beta2},
               {"eps", state.adam.eps},
               {"m", flat(state.adam.m)},
               {"v", flat(state.adam.v)}};
  std::ostringstream rng;
  rng << state.rng;
  j["rng"] = rng.str();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

TrainerState load_trainer_state(const std::filesystem::path& path, const FeatureNet& net) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format_version").get<int>() != 1) throw ConfigError("unsupported trainer state format_version");
    TrainerState s;
    s.epoch = j.at("epoch").get<int>();
    s.adam = AdamState::for_net(net);
    const auto& a = j.at("adam");
    s.adam.step = a.at("step").get<long>();
    s.adam.beta1 = a.at("beta1").get<double>();
    s.adam.beta2 = a.at("beta2").get<double>();
    s.adam.eps = a.at("eps").get<double>();
    unflat(a.at("m"), s.adam.m, "adam.m");
    unflat(a.at("v"), s.adam.v, "adam.v");
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed trainer state: ") + e.what());
  }
}

}  // namespace lkreg
