#pragma once

#include <unistd.h>

#include <random>
#include <vector>

#include "patchflow/geometry/types.hpp"

namespace patchflow::testing {

inline std::vector<Point3> random_points(std::size_t n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Point3> pts(n);
  for (auto& p : pts) p = Point3(u(rng), u(rng), u(rng));
  return pts;
}

inline RigidTransform random_rigid(std::mt19937_64& rng, double max_shift = 5.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> ang(-3.1, 3.1);
  std::uniform_real_distribution<double> sh(-max_shift, max_shift);
  Vec3 axis(g(rng), g(rng), g(rng));
  if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
  return RigidTransform::from(rotation_about(axis, ang(rng)), Vec3(sh(rng), sh(rng), sh(rng)));
}

inline std::vector<Point3> grid_points(int nx, int ny, double spacing, double z = 0.0) {
  std::vector<Point3> pts;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) pts.emplace_back(i * spacing, j * spacing, z);
  return pts;
}

}  // namespace patchflow::testing

#include <filesystem>
#include <fstream>
#include <string>

namespace patchflow::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("patchflow_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream(path) << content;
}

}  // namespace patchflow::testing
