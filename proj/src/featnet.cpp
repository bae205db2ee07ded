#include "lkreg/featnet.hpp"

#include "lkreg/errors.hpp"

#include <cmath>
#include <random>

namespace lkreg {

FeatureNet::FeatureNet(std::vector<Layer> layers, NetMode mode) : layers_(std::move(layers)), mode_(mode) {
  validate();
}

FeatureNet FeatureNet::create(const std::vector<int>& widths, std::uint64_t seed, NetMode mode) {
  if (widths.size() < 2) throw ConfigError("network needs at least one layer");
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const int in = widths[l - 1], out = widths[l];
    if (in < 1 || out < 1) throw ConfigError("layer widths must be positive");
    const double bound = std::sqrt(6.0 / in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer;
    layer.weight.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.bn_scale = Eigen::VectorXd::Ones(out);
    layer.bn_shift = Eigen::VectorXd::Zero(out);
    layer.bn_mean = Eigen::VectorXd::Zero(out);
    layer.bn_var = Eigen::VectorXd::Ones(out);
    layers.push_back(std::move(layer));
  }
  return FeatureNet(std::move(layers), mode);
}

std::vector<int> FeatureNet::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(static_cast<int>(layers_.front().in()));
  for (const Layer& l : layers_) w.push_back(static_cast<int>(l.out()));
  return w;
}

void FeatureNet::validate() const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  if (layers_.front().in() != 3) throw ConfigError("first layer must take 3 inputs");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const auto out = layer.out();
    if (l > 0 && layer.in() != layers_[l - 1].out())
      throw ConfigError("layer " + std::to_string(l) + " input width does not match previous output");
    if (layer.bias.size() != out || layer.bn_scale.size() != out || layer.bn_shift.size() != out ||
        layer.bn_mean.size() != out || layer.bn_var.size() != out)
      throw ConfigError("layer " + std::to_string(l) + " parameter sizes do not match its width");
    if ((layer.bn_var.array() < kBnEpsilon).any())
      throw ConfigError("layer " + std::to_string(l) + " has bn_var below epsilon");
  }
}

namespace {

struct Normalization {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_std;
};

Normalization normalization(const Layer& layer, const Eigen::MatrixXd& x, NetMode mode) {
  if (mode == NetMode::kInference) return {layer.bn_mean, layer.bn_var.array().rsqrt().matrix()};
  const Eigen::VectorXd mean = x.rowwise().mean();
  const Eigen::VectorXd var = (x.colwise() - mean).array().square().rowwise().mean();
  return {mean, (var.array() + kBnEpsilon).rsqrt().matrix()};
}

template <typename Derived>
void max_pool(const Eigen::MatrixBase<Derived>& z, Eigen::VectorXd* global, std::vector<Eigen::Index>* argmax) {
  const Eigen::Index k = z.rows();
  *global = z.col(0).template cast<double>();
  if (argmax) argmax->assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 1; i < z.cols(); ++i) {
    for (Eigen::Index r = 0; r < k; ++r) {
      const double v = static_cast<double>(z(r, i));
      if (v > (*global)[r]) {
        (*global)[r] = v;
        if (argmax) (*argmax)[static_cast<std::size_t>(r)] = i;
      }
    }
  }
}

void require_inference(const FeatureNet& net) {
  if (net.mode() != NetMode::kInference)
    throw ModeError("input gradients need an inference-mode network (batch statistics couple points)");
}

}  // namespace

Activations forward(const FeatureNet& net, const Points& points) {
  if (points.cols() < 1) throw DegenerateInput("forward needs at least one point");
  net.validate();
  Activations acts;
  acts.z.reserve(net.layers().size() + 1);
  acts.z.emplace_back(points);
  for (const Layer& layer : net.layers()) {
    Eigen::MatrixXd x = layer.weight * acts.z.back();
    x.colwise() += layer.bias;
    Normalization n = normalization(layer, x, net.mode());
    Eigen::MatrixXd xhat = (x.colwise() - n.mean).array().colwise() * n.inv_std.array();
    Eigen::MatrixXd u = (xhat.array().colwise() * layer.bn_scale.array()).colwise() + layer.bn_shift.array();
    acts.z.emplace_back(u.cwiseMax(0.0));
    acts.xhat.push_back(std::move(xhat));
    acts.inv_std.push_back(std::move(n.inv_std));
  }
  max_pool(acts.z.back(), &acts.global, &acts.argmax);
  return acts;
}

Eigen::VectorXd global_feature(const FeatureNet& net, const Points& points) {
  if (points.cols() < 1) throw DegenerateInput("forward needs at least one point");
  net.validate();
  Eigen::MatrixXd z = points;
  for (const Layer& layer : net.layers()) {
    Eigen::MatrixXd x = layer.weight * z;
    x.colwise() += layer.bias;
    const Normalization n = normalization(layer, x, net.mode());
    const Eigen::ArrayXd gain = layer.bn_scale.array() * n.inv_std.array();
    const Eigen::ArrayXd offset = layer.bn_shift.array() - gain * n.mean.array();
    z = ((x.array().colwise() * gain).colwise() + offset).cwiseMax(0.0).matrix();
  }
  Eigen::VectorXd global;
  max_pool(z, &global, nullptr);
  return global;
}

Eigen::VectorXd global_feature_single(const FeatureNet& net, const Points& points) {
  if (points.cols() < 1) throw DegenerateInput("forward needs at least one point");
  net.validate();
  Eigen::MatrixXf z = points.cast<float>();
  for (const Layer& layer : net.layers()) {
    Eigen::MatrixXf x = layer.weight.cast<float>() * z;
    x.colwise() += layer.bias.cast<float>();
    Eigen::VectorXf mean, inv_std;
    if (net.mode() == NetMode::kInference) {
      mean = layer.bn_mean.cast<float>();
      inv_std = layer.bn_var.cast<float>().array().rsqrt().matrix();
    } else {
      mean = x.rowwise().mean();
      const Eigen::VectorXf var = (x.colwise() - mean).array().square().rowwise().mean();
      inv_std = (var.array() + static_cast<float>(kBnEpsilon)).rsqrt().matrix();
    }
    const Eigen::ArrayXf scale = layer.bn_scale.cast<float>().array();
    const Eigen::ArrayXf shift = layer.bn_shift.cast<float>().array();
    Eigen::ArrayXXf u = ((x.colwise() - mean).array().colwise() * inv_std.array()).colwise() * scale;
    z = (u.colwise() + shift).cwiseMax(0.0f).matrix();
  }
  Eigen::VectorXd global;
  max_pool(z, &global, nullptr);
  return global;
}

std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> input_gradient(const FeatureNet& net, const Points& points) {
  require_inference(net);
  const Activations acts = forward(net, points);
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> out;
  out.reserve(static_cast<std::size_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    // d z_L / d z_0 = prod_l diag(mask_l * gain_l) A_l, accumulated from the output side.
    Eigen::MatrixXd d;
    for (std::size_t l = depth; l-- > 0;) {
      const Layer& layer = layers[l];
      Eigen::ArrayXd gain = layer.bn_scale.array() * acts.inv_std[l].array();
      gain *= (acts.z[l + 1].col(i).array() > 0.0).cast<double>();
      if (l + 1 == depth) {
        d = gain.matrix().asDiagonal() * layer.weight;
      } else {
        d = (d * gain.matrix().asDiagonal()) * layer.weight;
      }
    }
    out.emplace_back(d.transpose());
  }
  return out;
}

Eigen::MatrixXd routed_input_gradient(const FeatureNet& net, const Activations& acts) {
  require_inference(net);
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  const auto k = static_cast<Eigen::Index>(acts.argmax.size());
  Eigen::MatrixXd v;
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = layers[l];
    const Eigen::ArrayXd gain = layer.bn_scale.array() * acts.inv_std[l].array();
    // Row r scales by the gain and ReLU mask of layer l at point argmax[r].
    Eigen::MatrixXd rowgain(k, layer.out());
    for (Eigen::Index r = 0; r < k; ++r) {
      const auto i = acts.argmax[static_cast<std::size_t>(r)];
      rowgain.row(r) = (gain * (acts.z[l + 1].col(i).array() > 0.0).cast<double>()).transpose();
    }
    if (l + 1 == depth) {
      v = rowgain.diagonal().asDiagonal() * layer.weight;
    } else {
      v = v.cwiseProduct(rowgain) * layer.weight;
    }
  }
  return v;
}

ParamSet ParamSet::zeros_like(const FeatureNet& net) {
  ParamSet p;
  for (const Layer& l : net.layers())
    p.layers.push_back({Eigen::MatrixXd::Zero(l.out(), l.in()), Eigen::VectorXd::Zero(l.out()),
                        Eigen::VectorXd::Zero(l.out()), Eigen::VectorXd::Zero(l.out())});
  return p;
}

ParamSet ParamSet::from(const FeatureNet& net) {
  ParamSet p;
  for (const Layer& l : net.layers()) p.layers.push_back({l.weight, l.bias, l.bn_scale, l.bn_shift});
  return p;
}

void ParamSet::write_to(FeatureNet& net) const {
  auto& layers = net.layers();
  if (layers.size() != this->layers.size()) throw ContractViolation("parameter set does not match network");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight = this->layers[l].weight;
    layers[l].bias = this->layers[l].bias;
    layers[l].bn_scale = this->layers[l].bn_scale;
    layers[l].bn_shift = this->layers[l].bn_shift;
  }
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
    layers[l].bn_scale += other.layers[l].bn_scale;
    layers[l].bn_shift += other.layers[l].bn_shift;
  }
  return *this;
}

ParamSet& ParamSet::operator*=(double s) {
  for (LayerParams& l : layers) {
    l.weight *= s;
    l.bias *= s;
    l.bn_scale *= s;
    l.bn_shift *= s;
  }
  return *this;
}

Eigen::Index ParamSet::size() const {
  Eigen::Index n = 0;
  for (const LayerParams& l : layers) n += l.weight.size() + l.bias.size() + l.bn_scale.size() + l.bn_shift.size();
  return n;
}

double& ParamSet::at(Eigen::Index i) {
  for (LayerParams& l : layers) {
    for (Eigen::MatrixXd* m : {&l.weight})
      if (i < m->size()) return m->data()[i]; else i -= m->size();
    for (Eigen::VectorXd* v : {&l.bias, &l.bn_scale, &l.bn_shift})
      if (i < v->size()) return (*v)[i]; else i -= v->size();
  }
  throw InvalidArgument("parameter index out of range");
}

double ParamSet::at(Eigen::Index i) const { return const_cast<ParamSet*>(this)->at(i); }

bool ParamSet::all_finite() const {
  for (const LayerParams& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite() || !l.bn_scale.allFinite() || !l.bn_shift.allFinite())
      return false;
  return true;
}

Backprop param_gradient(const FeatureNet& net, const Points& points, const Activations& acts,
                        const Eigen::VectorXd& upstream) {
  if (acts.z.empty() || acts.z[0].cols() != points.cols() || acts.z[0] != points)
    throw ContractViolation("activations are stale: points changed since the forward pass");
  const auto& layers = net.layers();
  if (upstream.size() != net.feature_dim()) throw InvalidArgument("upstream gradient has wrong length");

  Backprop out{ParamSet::zeros_like(net), Points::Zero(3, points.cols())};

  // Only pooled points receive gradient; work on the compact column set.
  std::vector<Eigen::Index> cols;
  std::vector<Eigen::Index> slot(static_cast<std::size_t>(points.cols()), -1);
  for (Eigen::Index i : acts.argmax) {
    if (slot[static_cast<std::size_t>(i)] < 0) {
      slot[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(cols.size());
      cols.push_back(i);
    }
  }
  const auto n = static_cast<Eigen::Index>(cols.size());
  auto gather = [&](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd g(m.rows(), n);
    for (Eigen::Index c = 0; c < n; ++c) g.col(c) = m.col(cols[static_cast<std::size_t>(c)]);
    return g;
  };

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(net.feature_dim(), n);
  for (std::size_t r = 0; r < acts.argmax.size(); ++r)
    g(static_cast<Eigen::Index>(r), slot[static_cast<std::size_t>(acts.argmax[r])]) = upstream[static_cast<Eigen::Index>(r)];

  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    LayerParams& grad = out.params.layers[l];
    const Eigen::MatrixXd zl = gather(acts.z[l + 1]);
    const Eigen::MatrixXd du = g.cwiseProduct((zl.array() > 0.0).cast<double>().matrix());
    grad.bn_shift = du.rowwise().sum();
    grad.bn_scale = du.cwiseProduct(gather(acts.xhat[l])).rowwise().sum();
    const Eigen::ArrayXd gain = layer.bn_scale.array() * acts.inv_std[l].array();
    const Eigen::MatrixXd dx = du.array().colwise() * gain;
    grad.weight = dx * gather(acts.z[l]).transpose();
    grad.bias = dx.rowwise().sum();
    g = layer.weight.transpose() * dx;
  }
  for (Eigen::Index c = 0; c < n; ++c) out.input.col(cols[static_cast<std::size_t>(c)]) = g.col(c);
  return out;
}

FeatureNet fold_bn(const FeatureNet& net) {
  std::vector<Layer> layers = net.layers();
  for (Layer& l : layers) {
    const Eigen::ArrayXd gain = l.bn_scale.array() * l.bn_var.array().rsqrt();
    l.weight = gain.matrix().asDiagonal() * l.weight;
    l.bias = (gain * (l.bias - l.bn_mean).array() + l.bn_shift.array()).matrix();
    l.bn_scale.setOnes();
    l.bn_shift.setZero();
    l.bn_mean.setZero();
    l.bn_var.setOnes();
  }
  return FeatureNet(std::move(layers), NetMode::kInference);
}

BatchStats batch_statistics(const FeatureNet& net, const std::vector<const Points*>& clouds) {
  if (clouds.empty()) throw InvalidArgument("batch statistics need at least one cloud");
  BatchStats stats;
  std::vector<Eigen::MatrixXd> z;
  z.reserve(clouds.size());
  Eigen::Index total = 0;
  for (const Points* p : clouds) {
    z.emplace_back(*p);
    total += p->cols();
  }
  for (const Layer& layer : net.layers()) {
    std::vector<Eigen::MatrixXd> x;
    x.reserve(z.size());
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(layer.out());
    for (const Eigen::MatrixXd& zc : z) {
      Eigen::MatrixXd xc = layer.weight * zc;
      xc.colwise() += layer.bias;
      sum += xc.rowwise().sum();
      x.push_back(std::move(xc));
    }
    const Eigen::VectorXd mean = sum / static_cast<double>(total);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(layer.out());
    for (const Eigen::MatrixXd& xc : x) sq += (xc.colwise() - mean).array().square().rowwise().sum().matrix();
    const Eigen::VectorXd var = (sq / static_cast<double>(total)).array() + kBnEpsilon;
    const Eigen::ArrayXd gain = layer.bn_scale.array() * var.array().rsqrt();
    for (std::size_t c = 0; c < x.size(); ++c)
      z[c] = (((x[c].colwise() - mean).array().colwise() * gain).colwise() + layer.bn_shift.array())
                 .cwiseMax(0.0)
                 .matrix();
    stats.mean.push_back(mean);
    stats.var.push_back(var);
  }
  return stats;
}

FeatureNet with_statistics(const FeatureNet& net, const BatchStats& stats) {
  std::vector<Layer> layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].bn_mean = stats.mean[l];
    layers[l].bn_var = stats.var[l];
  }
  return FeatureNet(std::move(layers), NetMode::kInference);
}

void update_running_statistics(FeatureNet& net, const BatchStats& stats, double momentum) {
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].bn_mean = momentum * layers[l].bn_mean + (1.0 - momentum) * stats.mean[l];
    layers[l].bn_var = momentum * layers[l].bn_var + (1.0 - momentum) * stats.var[l];
  }
}

}  // namespace lkreg
