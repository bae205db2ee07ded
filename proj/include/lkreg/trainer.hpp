#pragma once

#include "lkreg/cloud.hpp"
#include "lkreg/featnet.hpp"
#include "lkreg/metrics.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lkreg {

enum class DecayMode {
  kDecoupled,     // AdamW-style weight decay
  kLearningRate,  // lr / (1 + decay * step)
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  DecayMode decay_mode = DecayMode::kDecoupled;
  int unroll = 2;
  double lambda_transform = 1.0;
  double lambda_feature = 1.0;
  double bn_momentum = 0.9;
  std::uint64_t seed = 0;
  SuccessCriterion criterion{};

  void validate() const;
};

struct DatasetConfig {
  int pairs = 500;
  int points = 1000;
  std::uint64_t seed = 0;
  double max_rot_deg = 45.0;
  double max_trans = 0.8;
  std::vector<PrimitiveKind> kinds{kAllPrimitives.begin(), kAllPrimitives.end()};
  /// Random per-axis scaling and orientation (breaks continuous symmetries).
  bool varied = true;

  void validate() const;
};

/// Normalized source, sampled perturbation, template = gt * source.
std::vector<PairSpec> make_dataset(const DatasetConfig& cfg);

struct AdamState {
  ParamSet m;
  ParamSet v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_net(const FeatureNet& net);
};

/// ||est * gt^-1 - I||_F^2.
double loss_transform(const RigidTransform& est, const RigidTransform& gt);
/// ||phi(est^-1 P_T) - phi(P_S)||^2.
double loss_feature(const FeatureNet& net, const RigidTransform& est, const PointCloud& templ,
                    const PointCloud& source);

struct PairLoss {
  double total = 0.0;
  double transform = 0.0;
  double feature = 0.0;
  RigidTransform estimate;
};

/// Loss after `cfg.unroll` inverse-compositional iterations with a fixed
/// Jacobian pseudoinverse (treated as a constant of the parameters).
PairLoss unrolled_loss(const FeatureNet& net, const PairSpec& pair, const Eigen::MatrixXd& pinv,
                       const TrainConfig& cfg);

struct PairGradient {
  PairLoss loss;
  ParamSet grad;
};

/// Exact reverse-mode gradient of unrolled_loss (inference-mode net).
PairGradient unrolled_loss_gradient(const FeatureNet& net, const PairSpec& pair, const Eigen::MatrixXd& pinv,
                                    const TrainConfig& cfg);

void adam_step(FeatureNet& net, const ParamSet& grad, AdamState& state, const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double loss_transform = 0.0;
  double loss_feature = 0.0;
  double loss_total = 0.0;
  double success_ratio = 0.0;
  int pairs = 0;
  int skipped = 0;  // rank-deficient Jacobians
};

/// One pass over `data` in an order shuffled by `rng`. Per batch: batch
/// normalization statistics over every cloud in the batch (frozen for the
/// gradient), running statistics updated, Adam step on the mean gradient.
/// Throws Error on a non-finite loss before touching the parameters.
EpochStats train_epoch(FeatureNet& net, const std::vector<PairSpec>& data, const TrainConfig& cfg,
                       AdamState& adam, Rng& rng);

/// Optimizer state plus bookkeeping needed to resume training.
struct TrainerState {
  AdamState adam;
  int epoch = 0;
  Rng rng;
};

void save_trainer_state(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_trainer_state(const std::filesystem::path& path, const FeatureNet& net);

}  // namespace lkreg
