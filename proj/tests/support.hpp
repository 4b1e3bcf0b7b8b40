#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "erp/erp.hpp"

namespace testing_support {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("erp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

// Generator for property tests; independent of the library PRNG.
struct Gen {
  std::mt19937_64 engine;
  explicit Gen(std::uint64_t seed) : engine(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(engine); }

  // Labels with at least one of each class (n >= 2).
  std::vector<erp::Label> labels(std::size_t n, double p_target) {
    std::vector<erp::Label> out(n);
    for (auto& l : out) l = coin(p_target) ? erp::Label::target : erp::Label::nontarget;
    out[0] = erp::Label::target;
    out[1] = erp::Label::nontarget;
    std::shuffle(out.begin(), out.end(), engine);
    return out;
  }

  erp::Matrix matrix(std::size_t rows, std::size_t cols) {
    erp::Matrix m(rows, cols);
    for (double& v : m.data) v = normal();
    return m;
  }
};

// Gaussian epochs with the first `n_targets` labeled target; targets carry a
// positive offset on channel 0 so a net can learn something.
inline erp::EpochSet random_epochs(std::size_t n_targets, std::size_t n_nontargets, std::size_t channels,
                                   std::size_t samples, std::uint64_t seed, double offset = 0.0) {
  Gen gen(seed);
  erp::EpochSet set(n_targets + n_nontargets, channels, samples, 100.0);
  for (std::size_t e = 0; e < set.n_epochs; ++e) {
    set.labels[e] = e < n_targets ? erp::Label::target : erp::Label::nontarget;
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t t = 0; t < samples; ++t)
        set.at(e, c, t) = gen.normal() + (e < n_targets && c == 0 ? offset : 0.0);
  }
  return set;
}

}  // namespace testing_support

#define EXPECT_ERP_ERROR(stmt, expected_code)                                           \
  do {                                                                                  \
    try {                                                                               \
      stmt;                                                                             \
      ADD_FAILURE() << "expected erp::Error(" << erp::to_string(expected_code) << ")"; \
    } catch (const erp::Error& e) {                                                     \
      EXPECT_EQ(e.code(), expected_code) << e.what();                                   \
    }                                                                                   \
  } while (0)
