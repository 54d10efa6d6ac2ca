#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "ks2d/spectral.hpp"

namespace testing {

inline ks2d::SpectralField random_field(const ks2d::DomainSpec& d, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  ks2d::SpectralField f(d);
  for (int k1 = 0; k1 < d.M; ++k1) {
    for (int k2 = -(d.N - 1); k2 < d.N; ++k2) {
      if (k1 == 0 && k2 < 0) continue;
      if (k1 == 0 && k2 == 0) {
        f(0, 0) = g(rng);
      } else {
        f.set_pair(k1, k2, {g(rng), g(rng)});
      }
    }
  }
  return f;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ks2d-test-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
