#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "patchflow/dvf.hpp"
#include "patchflow/errors.hpp"
#include "patchflow/geometry/types.hpp"
#include "patchflow/io/camera.hpp"
#include "patchflow/io/point_cloud.hpp"
#include "patchflow/io/raster.hpp"

namespace patchflow {

enum class BodyKind { kBoulder, kPlate, kRough };

inline const char* to_string(BodyKind k) {
  switch (k) {
    case BodyKind::kBoulder:
      return "boulder";
    case BodyKind::kPlate:
      return "plate";
    default:
      return "rough";
  }
}

/// A rigid body resting on the terrain. Semi-axes are along the yawed
/// footprint; `height` is the dome or mound height, or the plate thickness.
struct BodySpec {
  BodyKind kind = BodyKind::kBoulder;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double semi_a = 5.0;
  double semi_b = 5.0;
  double height = 2.0;
  double yaw = 0.0;
  double albedo = 190.0;
  bool textured = true;
  /// Drawn from the motion scale when unset.
  std::optional<RigidTransform> motion;
};

struct SynthParams {
  double extent = 100.0;
  std::size_t n_points = 200000;
  /// Random bodies, used only when `bodies` is empty.
  std::size_t n_bodies = 8;
  double motion_scale = 5.0;
  double max_rotation_deg = 10.0;
  /// Gaussian noise per coordinate; negative means 0.2 x point spacing.
  double noise_sigma = -1.0;
  bool texture = true;
  bool terrain_textured = true;
  double terrain_relief = 4.0;
  double terrain_albedo = 110.0;
  double texture_scale = 0.8;
  double texture_amplitude = 45.0;
  int cameras_per_epoch = 2;
  double gsd = 0.2;
  double camera_height = 120.0;
  double image_noise = 2.0;
  RigidTransform terrain_motion;
  std::vector<BodySpec> bodies;

  void validate() const {
    if (!(extent > 0.0)) throw InvalidParams("extent must be positive");
    if (n_points < 100) throw InvalidParams("n_points must be at least 100");
    if (!(motion_scale >= 0.0)) throw InvalidParams("motion scale must be non-negative");
    if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 10.0))
      throw InvalidParams("max rotation must lie in [0, 10] degrees");
    if (!(texture_scale > 0.0)) throw InvalidParams("texture scale must be positive");
    if (cameras_per_epoch < 0) throw InvalidParams("camera count must be non-negative");
    if (!(gsd > 0.0) || !(camera_height > 0.0)) throw InvalidParams("gsd and camera height must be positive");
    if (!terrain_motion.is_valid(1e-6)) throw InvalidParams("terrain motion is not a rigid transform");
    for (const BodySpec& b : bodies) {
      if (!(b.semi_a > 0.0 && b.semi_b > 0.0 && b.height > 0.0)) throw InvalidParams("body sizes must be positive");
      if (b.motion && !b.motion->is_valid(1e-6)) throw InvalidParams("body motion is not a rigid transform");
    }
  }
};

struct SyntheticBody {
  BodySpec spec;
  std::vector<PointIndex> point_ids;
  RigidTransform motion;
};

struct SyntheticScene {
  PointCloud source, target;
  std::vector<Raster> source_images, target_images;
  std::vector<CameraModel> source_cameras, target_cameras;
  std::vector<SyntheticBody> bodies;
  /// Per source point: body index, or -1 for terrain.
  std::vector<int> owner;
  /// Per source point: T(p) - p.
  std::vector<Vec3> displacement;
  RigidTransform terrain_motion;
  double spacing = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double lattice_value(std::uint64_t seed, long long x, long long y, long long z) {
  std::uint64_t h = splitmix(seed ^ static_cast<std::uint64_t>(x));
  h = splitmix(h ^ static_cast<std::uint64_t>(y));
  h = splitmix(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Smooth value noise in [0, 1].
inline double value_noise(std::uint64_t seed, const Vec3& p) {
  const Vec3 f = p.array().floor();
  const Vec3 t = p - f;
  const Vec3 s = t.array() * t.array() * (3.0 - 2.0 * t.array());
  const auto ix = static_cast<long long>(f.x()), iy = static_cast<long long>(f.y()),
             iz = static_cast<long long>(f.z());
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? s.x() : 1 - s.x()) * (dy ? s.y() : 1 - s.y()) * (dz ? s.z() : 1 - s.z());
    acc += w * lattice_value(seed, ix + dx, iy + dy, iz + dz);
  }
  return acc;
}

/// Two-octave surface texture in [-1, 1] on material coordinates.
inline double texture_value(std::uint64_t seed, const Vec3& m, double scale) {
  const double a = value_noise(seed, m / scale), b = value_noise(seed + 1, 2.0 * m / scale);
  return std::clamp(1.6 * (2.0 * (0.65 * a + 0.35 * b) - 1.0), -1.0, 1.0);
}

inline Eigen::Vector2d to_local(const BodySpec& b, const Eigen::Vector2d& xy) {
  const Eigen::Vector2d d = xy - b.center;
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

inline Eigen::Vector2d from_local(const BodySpec& b, const Eigen::Vector2d& l) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return b.center + Eigen::Vector2d(c * l.x() - s * l.y(), s * l.x() + c * l.y());
}

inline bool in_footprint(const BodySpec& b, const Eigen::Vector2d& xy) {
  const Eigen::Vector2d l = to_local(b, xy);
  if (b.kind == BodyKind::kPlate) return std::abs(l.x()) <= b.semi_a && std::abs(l.y()) <= b.semi_b;
  const double u = l.x() / b.semi_a, v = l.y() / b.semi_b;
  return u * u + v * v <= 1.0;
}

inline double bounding_radius(const BodySpec& b) {
  return b.kind == BodyKind::kPlate ? std::hypot(b.semi_a, b.semi_b) : std::max(b.semi_a, b.semi_b);
}

/// T(p) - p written as (R - I) p + t, exact for pure translations.
inline Vec3 displacement_of(const RigidTransform& t, const Point3& p) {
  return (t.rotation - Eigen::Matrix3d::Identity()) * p + t.translation;
}

class SceneBuilder {
 public:
  SceneBuilder(const SynthParams& p, std::uint64_t seed) : p_(p), seed_(seed), rng_(seed) {}

  double terrain_height(double x, double y) const {
    const double a = value_noise(seed_ + 11, Vec3(x / 25.0, y / 25.0, 0.0));
    const double b = value_noise(seed_ + 12, Vec3(x / 9.0, y / 9.0, 0.0));
    return p_.terrain_relief * (0.7 * a + 0.3 * b);
  }

  double albedo(int owner) const { return owner < 0 ? p_.terrain_albedo : bodies_[owner].spec.albedo; }
  bool textured(int owner) const { return owner < 0 ? p_.terrain_textured : bodies_[owner].spec.textured; }

  /// Gray value of the surface point with material coordinates `m`.
  double intensity(int owner, const Vec3& m) const {
    double v = albedo(owner);
    if (textured(owner))
      v += p_.texture_amplitude * texture_value(seed_ + 101 + static_cast<std::uint64_t>(owner + 1), m,
                                                p_.texture_scale);
    return std::clamp(v, 0.0, 255.0);
  }

  const RigidTransform& motion(int owner) const {
    return owner < 0 ? p_.terrain_motion : bodies_[static_cast<std::size_t>(owner)].motion;
  }

  RigidTransform random_motion(const BodySpec& b) {
    std::uniform_real_distribution<double> az(0.0, 2.0 * std::numbers::pi), mag(0.3, 1.0), tilt(-0.15, 0.15);
    std::uniform_real_distribution<double> rot(-p_.max_rotation_deg, p_.max_rotation_deg);
    const double a = az(rng_), m = mag(rng_) * p_.motion_scale;
    const Eigen::Vector2d t(m * std::cos(a), m * std::sin(a));
    const Eigen::Vector2d c2 = b.center + t;
    const double z0 = terrain_height(b.center.x(), b.center.y());
    const Vec3 shift(t.x(), t.y(), terrain_height(c2.x(), c2.y()) - z0);
    const Vec3 axis(tilt(rng_), tilt(rng_), 1.0);
    const double angle = rot(rng_) * std::numbers::pi / 180.0;
    return RigidTransform::about(rotation_about(axis, angle), Point3(b.center.x(), b.center.y(), z0), shift);
  }

  Eigen::Vector2d moved_center(const BodySpec& b) const {
    return (*b.motion)(Point3(b.center.x(), b.center.y(), 0.0)).head<2>();
  }

  /// Random bodies keep their source footprints apart and their target
  /// footprints apart.
  void place_bodies() {
    std::vector<BodySpec> specs = p_.bodies;
    if (specs.empty()) {
      std::uniform_real_distribution<double> semi(3.5, 6.0), hgt(1.5, 3.0), yaw(0.0, std::numbers::pi);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (std::size_t k = 0; k < p_.n_bodies; ++k) {
        BodySpec b;
        b.kind = static_cast<BodyKind>(k % 3);
        b.semi_a = semi(rng_);
        b.semi_b = semi(rng_);
        b.height = b.kind == BodyKind::kPlate ? 0.5 : hgt(rng_);
        b.yaw = yaw(rng_);
        b.albedo = k % 2 == 0 ? 190.0 : 45.0;
        b.textured = p_.texture;
        const double r = bounding_radius(b), pad = r + p_.motion_scale + 2.0;
        bool placed = false;
        for (int attempt = 0; attempt < 5000 && !placed && 2 * pad < p_.extent; ++attempt) {
          b.center = Eigen::Vector2d(pad + u01(rng_) * (p_.extent - 2 * pad), pad + u01(rng_) * (p_.extent - 2 * pad));
          b.motion = random_motion(b);
          const Eigen::Vector2d moved = moved_center(b);
          placed = true;
          for (const BodySpec& o : specs) {
            const double gap = r + bounding_radius(o) + 2.0;
            placed = placed && (b.center - o.center).norm() > gap && (moved - moved_center(o)).norm() > gap;
          }
        }
        if (!placed) throw InvalidParams("cannot place " + std::to_string(p_.n_bodies) + " bodies in the scene extent");
        specs.push_back(b);
      }
    }
    for (const BodySpec& b : specs) bodies_.push_back({b, {}, b.motion ? *b.motion : random_motion(b)});
  }

  double estimate_spacing() const {
    double area = p_.extent * p_.extent;
    for (const auto& body : bodies_) {
      const BodySpec& b = body.spec;
      if (b.kind == BodyKind::kBoulder) area += std::numbers::pi * b.semi_a * b.semi_b;
      if (b.kind == BodyKind::kPlate) area += 2.0 * (b.semi_a + b.semi_b) * 2.0 * b.height;
      if (b.kind == BodyKind::kRough) area += 0.3 * std::numbers::pi * b.semi_a * b.semi_b;
    }
    return std::sqrt(area / static_cast<double>(p_.n_points));
  }

  void add(const Point3& x, int owner) {
    clean_.push_back(x);
    owner_.push_back(owner);
  }

  void sample_terrain(double s) {
    std::uniform_real_distribution<double> jit(-0.3 * s, 0.3 * s);
    const auto n = static_cast<long long>(std::ceil(p_.extent / s));
    for (long long j = 0; j < n; ++j)
      for (long long i = 0; i < n; ++i) {
        const double x = (static_cast<double>(i) + 0.5) * s + jit(rng_);
        const double y = (static_cast<double>(j) + 0.5) * s + jit(rng_);
        bool covered = false;
        for (const auto& b : bodies_) covered = covered || in_footprint(b.spec, {x, y});
        if (!covered) add(Point3(x, y, terrain_height(x, y)), -1);
      }
  }

  void sample_boulder(const BodySpec& b, int owner, double s) {
    const double ha = b.semi_a, hb = b.semi_b, hc = b.height;
    const double z0 = terrain_height(b.center.x(), b.center.y()) - 0.25 * hc;
    const double pw = 1.6075;
    const double area = 4.0 * std::numbers::pi *
                        std::pow((std::pow(ha * hb, pw) + std::pow(ha * hc, pw) + std::pow(hb * hc, pw)) / 3.0, 1.0 / pw);
    const auto target = static_cast<std::size_t>(area / (s * s));
    const double wmax = std::max({hb * hc, ha * hc, ha * hb});
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::size_t drawn = 0;
    while (drawn < target) {
      Vec3 n(g(rng_), g(rng_), g(rng_));
      if (n.norm() < 1e-12) continue;
      n.normalize();
      const double w = Vec3(hb * hc * n.x(), ha * hc * n.y(), ha * hb * n.z()).norm();
      if (u01(rng_) * wmax > w) continue;
      ++drawn;
      const Eigen::Vector2d xy = from_local(b, {ha * n.x(), hb * n.y()});
      const double z = z0 + hc * n.z();
      if (z >= terrain_height(xy.x(), xy.y())) add(Point3(xy.x(), xy.y(), z), owner);
    }
  }

  void sample_plate(const BodySpec& b, int owner, double s) {
    double top = -std::numeric_limits<double>::infinity();
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j) {
        const Eigen::Vector2d xy = from_local(b, {0.5 * i * b.semi_a, 0.5 * j * b.semi_b});
        top = std::max(top, terrain_height(xy.x(), xy.y()));
      }
    top += b.height;
    std::uniform_real_distribution<double> jit(-0.3 * s, 0.3 * s);
    const auto nx = static_cast<long long>(std::ceil(2.0 * b.semi_a / s));
    const auto ny = static_cast<long long>(std::ceil(2.0 * b.semi_b / s));
    for (long long j = 0; j < ny; ++j)
      for (long long i = 0; i < nx; ++i) {
        const double lx = std::clamp(-b.semi_a + (static_cast<double>(i) + 0.5) * s + jit(rng_), -b.semi_a, b.semi_a);
        const double ly = std::clamp(-b.semi_b + (static_cast<double>(j) + 0.5) * s + jit(rng_), -b.semi_b, b.semi_b);
        const Eigen::Vector2d xy = from_local(b, {lx, ly});
        add(Point3(xy.x(), xy.y(), top), owner);
      }
    const std::array<Eigen::Vector2d, 4> corners{Eigen::Vector2d(-b.semi_a, -b.semi_b), Eigen::Vector2d(b.semi_a, -b.semi_b),
                                                 Eigen::Vector2d(b.semi_a, b.semi_b), Eigen::Vector2d(-b.semi_a, b.semi_b)};
    for (std::size_t e = 0; e < 4; ++e) {
      const Eigen::Vector2d a = corners[e], c = corners[(e + 1) % 4];
      const auto steps = static_cast<long long>(std::ceil((c - a).norm() / s));
      for (long long k = 0; k < steps; ++k) {
        const Eigen::Vector2d xy = from_local(b, a + (c - a) * ((static_cast<double>(k) + 0.5) / steps));
        for (double z = terrain_height(xy.x(), xy.y()) + 0.5 * s; z < top; z += s) add(Point3(xy.x(), xy.y(), z), owner);
      }
    }
  }

  void sample_rough(const BodySpec& b, int owner, double s) {
    std::uniform_real_distribution<double> jit(-0.3 * s, 0.3 * s);
    const double r = bounding_radius(b);
    const auto n = static_cast<long long>(std::ceil(2.0 * r / s));
    for (long long j = 0; j < n; ++j)
      for (long long i = 0; i < n; ++i) {
        const Eigen::Vector2d l(-r + (static_cast<double>(i) + 0.5) * s + jit(rng_),
                                -r + (static_cast<double>(j) + 0.5) * s + jit(rng_));
        const double u = l.x() / b.semi_a, v = l.y() / b.semi_b, q = u * u + v * v;
        if (q > 1.0) continue;
        const Eigen::Vector2d xy = from_local(b, l);
        const double ridge = 1.0 - std::abs(2.0 * value_noise(seed_ + 31 + owner, Vec3(l.x() / 1.5, l.y() / 1.5, 0.0)) - 1.0);
        const double z = terrain_height(xy.x(), xy.y()) + (1.0 - q) * (b.height + 0.8 * ridge);
        add(Point3(xy.x(), xy.y(), z), owner);
      }
  }

  std::vector<CameraModel> cameras(const std::string& prefix) const {
    std::vector<CameraModel> out;
    double zmax = 0.0;
    for (const Point3& x : clean_) zmax = std::max(zmax, x.z());
    const double offset = 0.1 * p_.extent;
    const double half = 0.5 * p_.extent + offset + p_.motion_scale + 5.0;
    const double range = p_.camera_height + zmax - 0.5 * p_.terrain_relief;
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    r(1, 1) = -1.0;
    r(2, 2) = -1.0;
    for (int k = 0; k < p_.cameras_per_epoch; ++k) {
      CameraModel c;
      c.image_id = prefix + "_cam" + std::to_string(k);
      c.fx = c.fy = range / p_.gsd;
      c.width = c.height = static_cast<int>(std::ceil(2.0 * half / p_.gsd));
      c.cx = 0.5 * (c.width - 1);
      c.cy = 0.5 * (c.height - 1);
      const double dx = k == 0 ? 0.0 : (k % 2 == 1 ? offset : -offset);
      const Point3 center(0.5 * p_.extent + dx, 0.5 * p_.extent + (k >= 3 ? offset : 0.0), zmax + p_.camera_height);
      c.pose = RigidTransform::from(r, -(r * center));
      out.push_back(c);
    }
    return out;
  }

  /// Splat z-buffer rendering; each covered pixel is shaded with the texture
  /// at the back-projected surface point in its owner's material frame.
  Raster render(const CameraModel& cam, const std::vector<Point3>& pts, bool target_epoch, double spacing) {
    Raster img(cam.width, cam.height, 1, cam.image_id);
    const std::size_t npx = static_cast<std::size_t>(cam.width) * cam.height;
    std::vector<double> depth(npx, std::numeric_limits<double>::infinity());
    std::vector<int> who(npx, -1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Point3 xc = cam.pose(pts[i]);
      if (xc.z() <= 0.0) continue;
      const double u = cam.fx * xc.x() / xc.z() + cam.cx, v = cam.fy * xc.y() / xc.z() + cam.cy;
      const double rad = spacing * cam.fx / xc.z() + 0.3;
      const int x0 = std::max(0, static_cast<int>(std::floor(u - rad))), x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(u + rad)));
      const int y0 = std::max(0, static_cast<int>(std::floor(v - rad))), y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(v + rad)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          if ((x - u) * (x - u) + (y - v) * (y - v) > rad * rad) continue;
          const std::size_t k = static_cast<std::size_t>(y) * cam.width + x;
          if (xc.z() < depth[k]) {
            depth[k] = xc.z();
            who[k] = static_cast<int>(i);
          }
        }
    }
    const RigidTransform to_world = cam.pose.inverse();
    std::normal_distribution<double> noise(0.0, p_.image_noise);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const std::size_t k = static_cast<std::size_t>(y) * cam.width + x;
        double val = 0.0;
        if (who[k] >= 0) {
          const double z = depth[k];
          const Point3 world = to_world(Point3((x - cam.cx) / cam.fx * z, (y - cam.cy) / cam.fy * z, z));
          const int o = owner_[static_cast<std::size_t>(who[k])];
          const Vec3 m = target_epoch ? motion(o).inverse()(world) : world;
          val = intensity(o, m);
        }
        if (p_.image_noise > 0.0) val += noise(rng_);
        img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
      }
    return img;
  }

  SyntheticScene build() {
    p_.validate();
    place_bodies();
    const double s = estimate_spacing();
    sample_terrain(s);
    for (std::size_t k = 0; k < bodies_.size(); ++k) {
      const int o = static_cast<int>(k);
      const BodySpec& b = bodies_[k].spec;
      if (b.kind == BodyKind::kBoulder) sample_boulder(b, o, s);
      if (b.kind == BodyKind::kPlate) sample_plate(b, o, s);
      if (b.kind == BodyKind::kRough) sample_rough(b, o, s);
    }
    SyntheticScene sc;
    sc.seed = seed_;
    sc.spacing = s;
    sc.noise_sigma = p_.noise_sigma < 0.0 ? 0.2 * s : p_.noise_sigma;
    sc.terrain_motion = p_.terrain_motion;
    sc.owner = owner_;
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t n = clean_.size();
    sc.source.epoch_label = "source";
    sc.target.epoch_label = "target";
    sc.source.points.resize(n);
    sc.target.points.resize(n);
    sc.source.colors.resize(n);
    sc.target.colors.resize(n);
    sc.displacement.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 e(g(rng_), g(rng_), g(rng_));
      sc.source.points[i] = clean_[i] + sc.noise_sigma * e;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 e(g(rng_), g(rng_), g(rng_));
      sc.displacement[i] = displacement_of(motion(owner_[i]), sc.source.points[i]);
      sc.target.points[i] = sc.source.points[i] + sc.displacement[i] + sc.noise_sigma * e;
      const auto gray = static_cast<std::uint8_t>(std::lround(intensity(owner_[i], clean_[i])));
      sc.source.colors[i] = sc.target.colors[i] = Rgb{gray, gray, gray};
    }
    for (std::size_t k = 0; k < bodies_.size(); ++k)
      for (std::size_t i = 0; i < n; ++i)
        if (owner_[i] == static_cast<int>(k)) bodies_[k].point_ids.push_back(i);
    sc.bodies = bodies_;
    sc.source_cameras = cameras("p");
    sc.target_cameras = cameras("q");
    for (const CameraModel& c : sc.source_cameras) sc.source_images.push_back(render(c, sc.source.points, false, s));
    for (const CameraModel& c : sc.target_cameras) sc.target_images.push_back(render(c, sc.target.points, true, s));
    return sc;
  }

 private:
  SynthParams p_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<SyntheticBody> bodies_;
  std::vector<Point3> clean_;
  std::vector<int> owner_;
};

}  // namespace detail

/// Terrain heightfield with rigid bodies, per-epoch clouds, rendered gray
/// images and dense ground truth. Deterministic in (params, seed).
inline SyntheticScene synth_generate_scene(const SynthParams& params, std::uint64_t seed) {
  return detail::SceneBuilder(params, seed).build();
}

/// T(p) - p for every source point from the stored motions.
inline std::vector<Vec3> recompute_ground_truth(const SyntheticScene& sc) {
  std::vector<Vec3> out(sc.source.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int o = sc.owner[i];
    const RigidTransform& t = o < 0 ? sc.terrain_motion : sc.bodies[static_cast<std::size_t>(o)].motion;
    out[i] = detail::displacement_of(t, sc.source.points[i]);
  }
  return out;
}

/// Ground truth as a field over every source point; patch_id is the body
/// index (-1 for terrain) and level 0.
inline DisplacementVectorField ground_truth_dvf(const SyntheticScene& sc) {
  DisplacementVectorField out;
  for (std::size_t i = 0; i < sc.source.size(); ++i)
    out.set(i, {sc.source.points[i], sc.displacement[i], 0, sc.owner[i], Modality::k3D});
  return out;
}

}  // namespace patchflow
