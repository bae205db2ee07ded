#pragma once

#include "lkreg/point_cloud.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lkreg {

inline constexpr double kBnEpsilon = 1e-5;

enum class NetMode { kTrain, kInference };

/// One per-point layer: z_out = ReLU(BN(A z_in + b)).
///
/// Batch normalization is y = bn_scale * (x - bn_mean) / sqrt(bn_var) + bn_shift,
/// where bn_var already includes the epsilon (so bn_var >= kBnEpsilon always).
/// A layer with (scale, shift, mean, var) = (1, 0, 0, 1) is an exact pass-through.
struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Eigen::VectorXd bn_scale;
  Eigen::VectorXd bn_shift;
  Eigen::VectorXd bn_mean;
  Eigen::VectorXd bn_var;

  Eigen::Index in() const { return weight.cols(); }
  Eigen::Index out() const { return weight.rows(); }
};

/// Simplified PointNet embedding: per-point MLP followed by max pooling.
class FeatureNet {
 public:
  FeatureNet() = default;
  FeatureNet(std::vector<Layer> layers, NetMode mode);

  /// widths = {3, w1, ..., K}. Kaiming-uniform fan-in weights, zero biases,
  /// identity batch normalization.
  static FeatureNet create(const std::vector<int>& widths, std::uint64_t seed,
                           NetMode mode = NetMode::kInference);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  NetMode mode() const { return mode_; }
  void set_mode(NetMode mode) { mode_ = mode; }

  std::vector<int> widths() const;
  Eigen::Index feature_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }

  /// Throws ConfigError when widths do not chain, the input width is not 3,
  /// or any bn_var entry is below kBnEpsilon.
  void validate() const;

 private:
  std::vector<Layer> layers_;
  NetMode mode_ = NetMode::kInference;
};

/// Intermediate values of one forward pass, kept for gradients.
struct Activations {
  std::vector<Eigen::MatrixXd> z;        // z[0] = input points, z[l] = ReLU output of layer l
  std::vector<Eigen::MatrixXd> xhat;     // per layer (x - mean) / sqrt(var)
  std::vector<Eigen::VectorXd> inv_std;  // per layer 1 / sqrt(var) actually used
  Eigen::VectorXd global;                // max-pooled feature, length K
  std::vector<Eigen::Index> argmax;      // per feature, lowest point index attaining the max

  Eigen::Index num_points() const { return z.empty() ? 0 : z[0].cols(); }
};

/// Train mode normalizes with statistics of the given points; inference mode
/// with the stored running statistics.
Activations forward(const FeatureNet& net, const Points& points);
Eigen::VectorXd global_feature(const FeatureNet& net, const Points& points);
inline Eigen::VectorXd global_feature(const FeatureNet& net, const PointCloud& cloud) {
  return global_feature(net, cloud.points());
}

/// Same pooled feature evaluated entirely in single precision.
Eigen::VectorXd global_feature_single(const FeatureNet& net, const Points& points);

/// Per point i, the 3 x K matrix d z_L(p_i) / d p_i, transposed (row = coordinate).
/// ReLU subgradient at exactly zero is zero. Throws ModeError in train mode.
std::vector<Eigen::Matrix<double, 3, Eigen::Dynamic>> input_gradient(const FeatureNet& net,
                                                                     const Points& points);

/// K x 3 matrix whose row k is d z_L,k / d p at the pooled point argmax[k],
/// i.e. the gradient of the pooled feature row k. Throws ModeError in train mode.
Eigen::MatrixXd routed_input_gradient(const FeatureNet& net, const Activations& acts);

/// Parameter-shaped container used for gradients and optimizer moments.
struct LayerParams {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::VectorXd bn_scale;
  Eigen::VectorXd bn_shift;
};

struct ParamSet {
  std::vector<LayerParams> layers;

  static ParamSet zeros_like(const FeatureNet& net);
  static ParamSet from(const FeatureNet& net);
  void write_to(FeatureNet& net) const;

  ParamSet& operator+=(const ParamSet& other);
  ParamSet& operator*=(double s);
  Eigen::Index size() const;
  /// Flat view order: per layer weight (column-major), bias, bn_scale, bn_shift.
  double& at(Eigen::Index i);
  double at(Eigen::Index i) const;
  bool all_finite() const;
};

struct Backprop {
  ParamSet params;
  Points input;  // d/d(points), 3 x N
};

/// Reverse pass of <upstream, global feature> through the pooling routing,
/// treating normalization statistics as constants. `points` must be the
/// points `acts` was computed from (ContractViolation otherwise).
Backprop param_gradient(const FeatureNet& net, const Points& points, const Activations& acts,
                        const Eigen::VectorXd& upstream);

/// Absorbs batch normalization into (A, b); result is inference mode with
/// pass-through normalization.
FeatureNet fold_bn(const FeatureNet& net);

/// Per-layer (mean, var + eps) of the pre-normalization activations over all
/// given clouds, computed layer by layer with batch statistics.
struct BatchStats {
  std::vector<Eigen::VectorXd> mean;
  std::vector<Eigen::VectorXd> var;
};
BatchStats batch_statistics(const FeatureNet& net, const std::vector<const Points*>& clouds);

/// Copy of `net` in inference mode using the given statistics.
FeatureNet with_statistics(const FeatureNet& net, const BatchStats& stats);

/// running = momentum * running + (1 - momentum) * batch.
void update_running_statistics(FeatureNet& net, const BatchStats& stats, double momentum);

// Weight files: versioned JSON.
inline constexpr int kWeightFormatVersion = 1;
void save_weights(const FeatureNet& net, const std::filesystem::path& path);
FeatureNet load_weights(const std::filesystem::path& path);
std::string weights_to_json(const FeatureNet& net);
FeatureNet weights_from_json(const std::string& text);

}  // namespace lkreg
