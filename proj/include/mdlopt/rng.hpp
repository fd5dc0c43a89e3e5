#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mdlopt {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derive an independent stream seed from a base seed and a stream tag.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x51ed2701a5c5e3d6ULL));
}

// Deterministic RNG wrapper. All randomness in the project flows through
// this type so that runs are reproducible and resumable (the engine state
// serializes into checkpoints).
class Rng {
 public:
  Rng() : gen_(0) {}
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t raw() { return gen_(); }

  // Uniform in [0, 1).
  float uniform() {
    return static_cast<float>((gen_() >> 11) * (1.0 / 9007199254740992.0));
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi_inclusive) {
    // Modulo bias is negligible for the small ranges used here.
    return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi_inclusive - lo + 1));
  }

  float normal() {
    // Box-Muller; implemented by hand so the stream is stdlib-independent.
    float u1 = uniform(), u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.2831853071795864f * u2);
  }

  // Standard Gumbel(0,1) noise.
  float gumbel() {
    float u = uniform();
    if (u < 1e-12f) u = 1e-12f;
    return -std::log(-std::log(u));
  }

  // Sample an index from an unnormalized non-negative weight row.
  int categorical(const Eigen::Ref<const Eigen::RowVectorXf>& weights) {
    float total = weights.sum();
    float r = uniform() * total;
    float acc = 0.0f;
    for (int k = 0; k < weights.size(); ++k) {
      acc += weights(k);
      if (r < acc) return k;
    }
    return static_cast<int>(weights.size()) - 1;
  }

  Eigen::MatrixXf normal_matrix(int rows, int cols, float scale = 1.0f) {
    Eigen::MatrixXf m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = normal() * scale;
    return m;
  }

  Eigen::MatrixXf uniform_matrix(int rows, int cols, float lo, float hi) {
    Eigen::MatrixXf m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = uniform(lo, hi);
    return m;
  }

  Eigen::MatrixXf gumbel_matrix(int rows, int cols) {
    Eigen::MatrixXf m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = gumbel();
    return m;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = gen_() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mdlopt
