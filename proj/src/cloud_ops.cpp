#include "lkreg/cloud.hpp"

#include "lkreg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace lkreg {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

struct Bump {
  double x, y, amp, sigma;
};

// Fixed, deliberately asymmetric bump layout.
constexpr std::array<Bump, 5> kBumps = {{{0.45, 0.30, 0.45, 0.25},
                                         {-0.50, 0.15, 0.30, 0.20},
                                         {0.10, -0.55, -0.35, 0.30},
                                         {-0.35, -0.45, 0.25, 0.15},
                                         {0.65, -0.20, 0.20, 0.12}}};

double bump_height(double x, double y, double* gx, double* gy) {
  double h = 0.0;
  *gx = 0.0;
  *gy = 0.0;
  for (const Bump& b : kBumps) {
    const double dx = x - b.x, dy = y - b.y;
    const double s2 = b.sigma * b.sigma;
    const double e = b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
    h += e;
    *gx += -e * dx / s2;
    *gy += -e * dy / s2;
  }
  return h;
}

Vec3 sample_surface(PrimitiveKind kind, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> u11(-1.0, 1.0);
  switch (kind) {
    case PrimitiveKind::kSphere: return unit_vector(rng);
    case PrimitiveKind::kCube: {
      std::uniform_int_distribution<int> face(0, 5);
      const int f = face(rng);
      Vec3 p(u11(rng), u11(rng), 0.0);
      const double sign = (f % 2 == 0) ? 1.0 : -1.0;
      switch (f / 2) {
        case 0: return {sign, p.x(), p.y()};
        case 1: return {p.x(), sign, p.y()};
        default: return {p.x(), p.y(), sign};
      }
    }
    case PrimitiveKind::kCylinder: {
      // Side area 4*pi, each cap pi.
      const double pick = u01(rng) * 6.0;
      const double a = 2.0 * kPi * u01(rng);
      if (pick < 4.0) return {std::cos(a), std::sin(a), u11(rng)};
      const double r = std::sqrt(u01(rng));
      return {r * std::cos(a), r * std::sin(a), pick < 5.0 ? 1.0 : -1.0};
    }
    case PrimitiveKind::kTorus: {
      constexpr double big = 1.0, small = 0.35;
      for (;;) {
        const double a = 2.0 * kPi * u01(rng);
        const double b = 2.0 * kPi * u01(rng);
        if (u01(rng) * (big + small) <= big + small * std::cos(b)) {
          const double ring = big + small * std::cos(b);
          return {ring * std::cos(a), ring * std::sin(a), small * std::sin(b)};
        }
      }
    }
    case PrimitiveKind::kPlaneWithBumps: {
      double slope_bound = 0.0;
      for (const Bump& b : kBumps) slope_bound += std::abs(b.amp) / b.sigma;
      const double bound = std::sqrt(1.0 + slope_bound * slope_bound);
      for (;;) {
        const double x = u11(rng), y = u11(rng);
        double gx, gy;
        const double h = bump_height(x, y, &gx, &gy);
        if (u01(rng) * bound <= std::sqrt(1.0 + gx * gx + gy * gy)) return {x, y, h};
      }
    }
  }
  throw InvalidArgument("unknown primitive kind");
}

void check_keep_fraction(double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw InvalidArgument("keep_fraction must lie in (0, 1]");
}

Eigen::Index kept_count(Eigen::Index n, double keep_fraction) {
  const auto count = static_cast<Eigen::Index>(std::llround(keep_fraction * static_cast<double>(n)));
  if (count < 4) throw DegenerateInput("corruption would leave fewer than 4 points");
  return count;
}

Points select(const Points& p, const std::vector<Eigen::Index>& idx) {
  Points out(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = p.col(idx[i]);
  return out;
}

}  // namespace

std::string to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::kSphere: return "sphere";
    case PrimitiveKind::kCube: return "cube";
    case PrimitiveKind::kCylinder: return "cylinder";
    case PrimitiveKind::kTorus: return "torus";
    case PrimitiveKind::kPlaneWithBumps: return "plane-with-bumps";
  }
  return "unknown";
}

PrimitiveKind parse_primitive(std::string_view name) {
  for (PrimitiveKind k : kAllPrimitives)
    if (to_string(k) == name) return k;
  throw InvalidArgument("unknown primitive '" + std::string(name) + "'");
}

PointCloud generate_primitive(PrimitiveKind kind, int n_points, std::uint64_t seed) {
  if (n_points < 8) throw InvalidArgument("generate_primitive needs n_points >= 8");
  Rng rng(seed);
  Points p(3, n_points);
  for (int i = 0; i < n_points; ++i) p.col(i) = sample_surface(kind, rng);
  return PointCloud(std::move(p), to_string(kind) + "-" + std::to_string(seed));
}

PointCloud generate_varied_primitive(PrimitiveKind kind, int n_points, std::uint64_t seed,
                                     double min_scale) {
  PointCloud base = generate_primitive(kind, n_points, seed);
  // Separate stream so the surface samples match generate_primitive.
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> mid(0.6, 0.8);
  std::uniform_real_distribution<double> low(std::min(min_scale, 0.5), 0.5);
  std::array<double, 3> scale = {1.0, mid(rng), low(rng)};
  std::shuffle(scale.begin(), scale.end(), rng);
  const Mat3 rot = random_rotation(rng);
  const Points p = rot * (Vec3(scale[0], scale[1], scale[2]).asDiagonal() * base.points());
  return PointCloud(p, "varied-" + base.id());
}

PointCloud generate_scene(int n_objects, int n_points, std::uint64_t seed, double spread) {
  if (n_objects < 1) throw InvalidArgument("scene needs at least one object");
  Rng rng(seed);
  std::uniform_real_distribution<double> pos(-spread, spread);
  std::uniform_int_distribution<int> kind(0, static_cast<int>(kAllPrimitives.size()) - 1);
  std::vector<Vec3> centers;
  for (int i = 0; i < n_objects; ++i) {
    Vec3 c;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      c = Vec3(pos(rng), pos(rng), pos(rng));
      const bool clear = std::all_of(centers.begin(), centers.end(),
                                     [&](const Vec3& o) { return (o - c).norm() > 0.9; });
      if (clear) break;
    }
    centers.push_back(c);
  }
  Points all(3, 0);
  for (int i = 0; i < n_objects; ++i) {
    const int share = n_points / n_objects + (i < n_points % n_objects ? 1 : 0);
    const auto k = kAllPrimitives[static_cast<std::size_t>(kind(rng))];
    const PointCloud obj = normalize_unit_box(generate_varied_primitive(k, std::max(share, 8), rng()));
    Points moved = obj.points();
    moved.colwise() += centers[static_cast<std::size_t>(i)];
    Points grown(3, all.cols() + moved.cols());
    grown << all, moved;
    all = std::move(grown);
  }
  return PointCloud(std::move(all), "scene-" + std::to_string(seed));
}

PointCloud normalize_unit_box(const PointCloud& cloud) {
  const Points& p = cloud.points();
  const Vec3 extent = p.rowwise().maxCoeff() - p.rowwise().minCoeff();
  if (extent.maxCoeff() <= 0.0) throw DegenerateInput("cannot normalize a zero-extent cloud");
  Points centered = p.colwise() - cloud.centroid();
  const double m = centered.cwiseAbs().maxCoeff();
  return cloud.with_points(centered * (0.5 / m));
}

Twist sample_perturbation(Rng& rng, double max_rot_deg, double max_trans) {
  if (!(max_rot_deg >= 0.0 && max_rot_deg < 180.0)) throw InvalidArgument("max_rot_deg must lie in [0, 180)");
  if (!(max_trans >= 0.0)) throw InvalidArgument("max_trans must be >= 0");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Vec3 axis = unit_vector(rng);
  const double angle = u01(rng) * max_rot_deg * kPi / 180.0;
  const Vec3 dir = unit_vector(rng);
  const double mag = u01(rng) * max_trans;
  const Mat3 r = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  return se3::log(RigidTransform(r, dir * mag));
}

PointCloud corrupt_noise(const PointCloud& cloud, double stddev, std::uint64_t seed) {
  if (!(stddev >= 0.0)) throw InvalidArgument("noise stddev must be >= 0");
  if (stddev == 0.0) return cloud;
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  Points p = cloud.points();
  for (Eigen::Index i = 0; i < p.cols(); ++i)
    for (int d = 0; d < 3; ++d) p(d, i) += n(rng);
  return cloud.with_points(std::move(p));
}

std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index count, Rng& rng) {
  if (count > n || count < 0) throw InvalidArgument("cannot sample more indices than available");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

PointCloud corrupt_sparsify(const PointCloud& cloud, double keep_fraction, std::uint64_t seed) {
  check_keep_fraction(keep_fraction);
  const Eigen::Index count = kept_count(cloud.size(), keep_fraction);
  Rng rng(seed);
  return cloud.with_points(select(cloud.points(), sample_without_replacement(cloud.size(), count, rng)));
}

PointCloud corrupt_halfspace(const PointCloud& cloud, const Vec3& camera_dir, double keep_fraction) {
  check_keep_fraction(keep_fraction);
  if (!(camera_dir.allFinite() && camera_dir.norm() > 0.0)) throw InvalidArgument("camera_dir must be non-zero");
  const Eigen::Index count = kept_count(cloud.size(), keep_fraction);
  const Eigen::VectorXd proj = cloud.points().transpose() * camera_dir.normalized();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(cloud.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return proj[a] > proj[b]; });
  order.resize(static_cast<std::size_t>(count));
  std::sort(order.begin(), order.end());
  return cloud.with_points(select(cloud.points(), order));
}

}  // namespace lkreg
