#pragma once

#include <vector>

#include "mdlopt/rng.hpp"
#include "mdlopt/tensor/ops.hpp"

namespace mdlopt::model {

using ag::Mat;
using ag::Tape;
using ag::Var;

// Result of sampling the boundary variables m_{1:T} for a time-major batch.
// `m` is the variable wired into the computation graph: with `hard` its
// forward values are exactly 0/1 and its gradient is the relaxed (soft)
// sample's gradient (straight-through); without `hard` it is the relaxed
// sample itself. `soft` always tracks the relaxed values, `hard_values`
// the 0/1 decisions actually taken.
struct BoundarySample {
  Var m;
  Var soft;
  Mat hard_values;  // (T*B x 1)
};

struct BoundaryOptions {
  float temperature = 1.0f;
  bool hard = true;
  // > 0: suppress any sampled boundary within min_length-1 steps of the most
  // recent boundary (training-time mask; off at evaluation).
  int min_length = 0;
  Rng* rng = nullptr;             // used when `noise` is null
  const Mat* noise = nullptr;     // injected Gumbel noise (T*B x 2), tests
  const Mat* forced = nullptr;    // force m to these 0/1 values (T*B x 1)
  const Mat* valid = nullptr;     // validity mask (T*B x 1); padding gets m=0
};

// Gumbel-softmax sampling of per-step boundary bits from 2-class logits
// (column 0 = "new segment"). The first step of every sequence is forced to
// m=1; forced and masked steps are constants and carry no gradient.
inline BoundarySample sample_boundaries(Tape& t, Var logits, int B, int T,
                                        const BoundaryOptions& opt) {
  const Eigen::Index n = logits.rows();
  assert(n == static_cast<Eigen::Index>(B) * T && logits.cols() == 2);
  assert(opt.temperature > 0.0f);

  if (opt.forced) {
    Var m = ag::constant(t, *opt.forced);
    return {m, m, *opt.forced};
  }

  Mat g;
  if (opt.noise) g = *opt.noise;
  else {
    assert(opt.rng != nullptr);
    g = opt.rng->gumbel_matrix(n, 2);
  }

  Var perturbed = ag::scale(ag::add(logits, ag::constant(t, g)), 1.0f / opt.temperature);
  Var soft_full = ag::softmax_rows(perturbed);
  Var soft = ag::slice_cols(soft_full, 0, 1);  // relaxed P(new segment)

  // Raw hard decisions before structural overrides.
  Mat raw_hard(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) raw_hard(i, 0) = soft.v()(i, 0) > 0.5f ? 1.0f : 0.0f;

  // keep[i]=1 where the sampled value is used; force_one[i]=1 where m is
  // pinned to 1 (first step of each sequence).
  Mat keep = Mat::Ones(n, 1), force_one = Mat::Zero(n, 1);
  for (int b = 0; b < B; ++b) {
    keep(b, 0) = 0.0f;
    force_one(b, 0) = 1.0f;
  }
  if (opt.valid) keep = keep.cwiseProduct(*opt.valid);

  Mat hard = Mat::Zero(n, 1);
  for (int b = 0; b < B; ++b) {
    int last_boundary = 0;  // step index of the most recent boundary
    for (int step = 0; step < T; ++step) {
      Eigen::Index i = static_cast<Eigen::Index>(step) * B + b;
      float decided;
      if (force_one(i, 0) > 0.0f) decided = 1.0f;
      else if (keep(i, 0) == 0.0f) decided = 0.0f;
      else {
        decided = raw_hard(i, 0);
        if (decided > 0.0f && opt.min_length > 0 && step - last_boundary < opt.min_length) {
          decided = 0.0f;
          keep(i, 0) = 0.0f;  // masked: constant zero, no gradient
        }
      }
      if (decided > 0.0f) last_boundary = step;
      hard(i, 0) = decided;
    }
  }

  // soft_eff = soft*keep + force_one: relaxed values with structural
  // overrides; gradient flows only through kept steps.
  Var soft_eff = ag::add(ag::mul(soft, ag::constant(t, keep)), ag::constant(t, force_one));
  Var m = opt.hard ? ag::straight_through(soft_eff, hard) : soft_eff;
  return {m, soft_eff, hard};
}

// Vector-quantized skill posterior: distribution over codebook entries
// proportional to softmax(-mean squared distance / t_vq).
struct VqPosterior {
  Var probs;      // (N x K)
  Var distances;  // (N x K) mean squared distance
};

inline VqPosterior vq_posterior(Tape& t, Var query, Var codebook, float t_vq) {
  assert(t_vq > 0.0f);
  (void)t;
  const float dim = static_cast<float>(query.cols());
  Var q2 = ag::sum_cols(ag::square(query));     // N x 1
  Var e2 = ag::sum_cols(ag::square(codebook));  // K x 1
  Var cross = ag::mm_nt(query, codebook);       // N x K
  // ||q - e||^2 = ||q||^2 + ||e||^2 - 2 <q,e>, averaged over dimensions so
  // the t_vq scale is width-independent.
  Var d = ag::add_colvec(ag::add_rowvec(ag::scale(cross, -2.0f), ag::transpose(e2)), q2);
  d = ag::scale(d, 1.0f / dim);
  Var probs = ag::softmax_rows(ag::scale(d, -1.0f / t_vq));
  return {probs, d};
}

// Sample one codebook index per row from the posterior and return the
// straight-through code vectors: forward emits the sampled rows of the
// codebook, backward follows the probability-weighted mixture.
struct VqSample {
  std::vector<int> indices;
  Var vectors;  // (N x D)
};

inline VqSample vq_sample(Tape& t, const VqPosterior& post, Var codebook, bool hard, Rng* rng,
                          const std::vector<int>* forced_indices = nullptr) {
  const Eigen::Index n = post.probs.rows();
  Var mixture = ag::mm(post.probs, codebook);
  std::vector<int> idx(static_cast<size_t>(n));
  if (forced_indices) {
    idx = *forced_indices;
  } else {
    assert(rng != nullptr);
    for (Eigen::Index i = 0; i < n; ++i)
      idx[static_cast<size_t>(i)] = rng->categorical(post.probs.v().row(i));
  }
  if (!hard) return {std::move(idx), mixture};
  Mat hard_rows(n, codebook.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    hard_rows.row(i) = codebook.v().row(idx[static_cast<size_t>(i)]);
  Var st = ag::straight_through(mixture, std::move(hard_rows));
  return {std::move(idx), st};
}

}  // namespace mdlopt::model
