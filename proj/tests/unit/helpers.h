#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "audeeg/linalg.h"
#include "audeeg/rng.h"

namespace testing {

inline audeeg::linalg::Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                       double sigma = 1.0) {
  audeeg::Rng rng(seed);
  audeeg::linalg::Matrix m(rows, cols);
  for (double& v : m.values()) v = sigma * rng.normal();
  return m;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Fresh scratch directory under the system temp dir, removed on exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("audeeg_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
