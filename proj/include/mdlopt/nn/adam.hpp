#pragma once

#include <cmath>
#include <vector>

#include "mdlopt/nn/layers.hpp"

namespace mdlopt::nn {

struct AdamConfig {
  float lr = 5e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Adam over a ParamRegistry. Moment buffers are indexed in registry order,
// which is fixed for a given model construction, so optimizer state
// serializes by parameter name.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamRegistry& reg, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& [name, p] : reg.items) {
      m_.push_back(Mat::Zero(p->v.rows(), p->v.cols()));
      v_.push_back(Mat::Zero(p->v.rows(), p->v.cols()));
    }
  }

  const AdamConfig& config() const { return cfg_; }
  int64_t steps() const { return t_; }

  // Returns the global gradient L2 norm before any clipping.
  float step(ParamRegistry& reg, float clip_norm = 0.0f) {
    double sq = 0.0;
    for (const auto& [name, p] : reg.items) sq += static_cast<double>(p->g.squaredNorm());
    float norm = static_cast<float>(std::sqrt(sq));
    float scale = 1.0f;
    if (clip_norm > 0.0f && norm > clip_norm) scale = clip_norm / norm;

    ++t_;
    float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (size_t i = 0; i < reg.items.size(); ++i) {
      Param& p = *reg.items[i].second;
      Mat g = p.g * scale;
      m_[i] = cfg_.beta1 * m_[i] + (1.0f - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0f - cfg_.beta2) * g.cwiseProduct(g);
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      p.v.array() -= cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
      p.zero_grad();
    }
    return norm;
  }

  std::vector<Mat>& m() { return m_; }
  std::vector<Mat>& v() { return v_; }
  void set_steps(int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace mdlopt::nn
