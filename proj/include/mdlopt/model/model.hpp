#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mdlopt/model/config.hpp"
#include "mdlopt/model/sampling.hpp"
#include "mdlopt/nn/layers.hpp"

namespace mdlopt::model {

using ag::Mat;
using ag::Tape;
using ag::Var;

// Time-major minibatch of (possibly padded) trajectories.
struct Batch {
  int B = 0, T = 0;
  Mat x;                     // (T*B x obs_dim)
  std::vector<int> actions;  // (T*B), control mode; 0 on padding
  Mat mask;                  // (T*B x 1) validity
  std::vector<int> lengths;  // per-sequence true length

  static Batch full_mask(int B, int T, Mat x_in) {
    Batch b;
    b.B = B;
    b.T = T;
    b.x = std::move(x_in);
    b.mask = Mat::Ones(static_cast<Eigen::Index>(B) * T, 1);
    b.lengths.assign(static_cast<size_t>(B), T);
    return b;
  }
};

struct SampleFlags {
  bool hard = true;
  bool train_mask = false;  // apply the minimum-skill-length mask
  float temperature = 1.0f;
  Rng* rng = nullptr;
  const Mat* gumbel_noise = nullptr;   // (T*B x 2)
  const Mat* gauss_noise = nullptr;    // (T*B x s_dim)
  const Mat* forced_m = nullptr;       // (T*B x 1)
  const std::vector<int>* forced_z = nullptr;  // candidate indices
};

// Everything the objectives need from one pass.
struct ForwardOut {
  int B = 0, T = 0;
  Mat mask;        // (T*B x 1)
  Var mask_var;

  Var m;           // boundary variables wired into the graph
  Var m_soft;      // relaxed boundary values (gradient path for counts)
  Mat m_hard;      // 0/1 decisions
  Var m_logits;    // (T*B x 2), col 0 = new segment
  Var q_m1;        // posterior P(m=1) without sampling noise

  Var z_probs;               // (T*B x K)
  std::vector<int> z_candidate;
  std::vector<int> z_effective;  // after copy semantics
  Var z_vec;                 // (T*B x hidden) effective code vectors

  Var s_mean, s_std, s_sample;        // (T*B x s_dim)
  Var prior_m_logits;                 // (T*B x 2); row block t=0 unused
  Var prior_s_mean, prior_s_std;

  Var recon_nll;   // (T*B x 1), masked; nats
};

// Hierarchical latent segmentation model. Frame mode reconstructs the
// observation at each step; control mode reconstructs the action given the
// observation. One instance per training run; forward passes with frozen
// parameters are safe to run concurrently on separate tapes.
class SkillModel {
 public:
  SkillModel(ModelConfig cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(init_seed, 0x300DE1u));
    const int h = cfg_.hidden;
    const int cc = cfg_.conv_channels_resolved();

    if (cfg_.mode == Mode::kFrame) {
      // encoder: stride-2 convs down to 4x4, a valid 4x4 conv to 1x1, then a
      // linear projection to the embedding width
      int size = cfg_.frame_size;
      int cin = 3;
      int idx = 0;
      while (size > 4) {
        enc_convs_.push_back(std::make_unique<nn::Conv2dLayer>(
            params_, "enc.conv" + std::to_string(idx), ag::ConvGeom{cin, size, size, cc, 4, 2, 1},
            rng));
        cin = cc;
        size /= 2;
        ++idx;
      }
      enc_convs_.push_back(std::make_unique<nn::Conv2dLayer>(
          params_, "enc.conv" + std::to_string(idx), ag::ConvGeom{cin, 4, 4, cc, 4, 1, 0}, rng));
      enc_fc_ = nn::Linear(params_, "enc.fc", cc, h, rng);

      // decoder mirrors the encoder
      dec_fc_ = nn::Linear(params_, "dec.fc", h, cc, rng);
      size = 4;
      idx = 0;
      dec_convs_.push_back(std::make_unique<nn::ConvT2dLayer>(
          params_, "dec.deconv0", ag::ConvGeom{cc, 1, 1, cc, 4, 1, 0}, rng));
      while (size < cfg_.frame_size / 2) {
        dec_convs_.push_back(std::make_unique<nn::ConvT2dLayer>(
            params_, "dec.deconv" + std::to_string(idx + 1),
            ag::ConvGeom{cc, size, size, cc, 4, 2, 1}, rng));
        size *= 2;
        ++idx;
      }
      dec_convs_.push_back(std::make_unique<nn::ConvT2dLayer>(
          params_, "dec.deconv" + std::to_string(idx + 1),
          ag::ConvGeom{cc, size, size, 3, 4, 2, 1}, rng));

      gru_s_fwd_ = nn::Gru(params_, "s_rnn_fwd", h, h, rng);
      gru_c_ = nn::Gru(params_, "c_rnn", h, h, rng);
      gru_h_ = nn::Gru(params_, "h_rnn", cfg_.s_dim + 2 * h, h, rng);
      post_s_head_ = nn::Linear(params_, "post_s", 2 * h, 2 * cfg_.s_dim, rng);
      prior_s_head_ = nn::Linear(params_, "prior_s", 2 * h, 2 * cfg_.s_dim, rng);
      abs_proj_ = nn::Linear(params_, "abs_proj", h + cfg_.s_dim, h, rng);
      prior_m_head_ = nn::Linear(params_, "prior_m", h, 2, rng);
    } else {
      const int g = cfg_.obs_grid;
      enc_convs_.push_back(std::make_unique<nn::Conv2dLayer>(
          params_, "enc.conv0", ag::ConvGeom{cfg_.obs_planes, g, g, cc, 3, 1, 0}, rng));
      enc_convs_.push_back(std::make_unique<nn::Conv2dLayer>(
          params_, "enc.conv1", ag::ConvGeom{cc, g - 2, g - 2, cc, 3, 1, 0}, rng));
      int flat = cc * (g - 4) * (g - 4);
      enc_fc_ = nn::Linear(params_, "enc.fc0", flat, h, rng);
      enc_fc2_ = nn::Linear(params_, "enc.fc1", h, h, rng);

      action_embed_ = nn::Embedding(params_, "action_embed", cfg_.n_actions, h, rng);
      fuse_ = nn::Linear(params_, "fuse", 2 * h, h, rng);

      post_s_head_ = nn::Linear(params_, "post_s", 2 * h, 2 * cfg_.s_dim, rng);
      prior_s_head_ = nn::Linear(params_, "prior_s", cfg_.s_dim, 2 * cfg_.s_dim, rng);
      prior_m_head_ = nn::Linear(params_, "prior_m", cfg_.s_dim, 2, rng);
      action_dec_ = nn::Mlp(params_, "action_dec",
                            {cfg_.s_dim, h, h, h, cfg_.n_actions}, nn::Act::kRelu, rng);
    }

    tcn_ = nn::CausalTcn(params_, "boundary_tcn", h, cfg_.tcn_width_resolved(), cfg_.tcn_layers,
                         cfg_.tcn_kernel, 2, rng);
    gru_z_fwd_ = nn::Gru(params_, "z_rnn_fwd", h, h, rng);
    gru_z_bwd_ = nn::Gru(params_, "z_rnn_bwd", h, h, rng);
    z_query_1_ = nn::Linear(params_, "z_query0", 2 * h, h, rng);
    z_query_2_ = nn::Linear(params_, "z_query1", h, h, rng);
    codebook_ = ag::Param(rng.normal_matrix(cfg_.n_skills, h, 1.0f / std::sqrt(float(h))));
    params_.add("codebook", &codebook_);
  }

  SkillModel(const SkillModel&) = delete;
  SkillModel& operator=(const SkillModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamRegistry& params() { return params_; }
  const nn::ParamRegistry& params() const { return params_; }

  // Per-step observation embedding (mode-appropriate input width).
  Var encode_observations(Tape& t, Var x) const {
    if (x.cols() != cfg_.obs_dim()) throw ArgumentError("encode_observations: bad input width");
    if (cfg_.mode == Mode::kFrame) {
      Var hcur = x;
      for (const auto& conv : enc_convs_) hcur = ag::elu(conv->apply(t, hcur));
      return enc_fc_.apply(t, hcur);
    }
    Var hcur = x;
    for (const auto& conv : enc_convs_) hcur = ag::relu(conv->apply(t, hcur));
    hcur = ag::relu(enc_fc_.apply(t, hcur));
    return enc_fc2_.apply(t, hcur);
  }

  Mat encode_observations_infer(const Mat& x) const {
    Tape t;
    Var v = encode_observations(t, ag::constant(t, x));
    return v.v();
  }

  // Boundary posterior logits from observation embeddings; strictly causal.
  Var boundary_logits(Tape& t, Var obs_emb, int B, int T) const {
    return tcn_.apply(t, obs_emb, B, T);
  }

  // Skill-posterior query from forward/backward recurrences over the
  // (mode-appropriate) embeddings.
  Var skill_query(Tape& t, Var emb, int B, int T) const {
    Var cf = gru_z_fwd_.seq(t, emb, B, T, false);
    Var cb = gru_z_bwd_.seq(t, emb, B, T, true);
    Var q = ag::relu(z_query_1_.apply(t, ag::concat_cols({cf, cb})));
    return z_query_2_.apply(t, q);
  }

  VqPosterior skill_posterior(Tape& t, Var query) const {
    return vq_posterior(t, query, ag::param(t, const_cast<ag::Param&>(codebook_)), cfg_.t_vq);
  }

  // Gaussian abstraction head (control mode wiring: on [z ; x_emb]).
  struct GaussOut {
    Var mean, std;
  };
  GaussOut abstraction_posterior(Tape& t, Var z_vec, Var obs_emb) const {
    Var pre = post_s_head_.apply(t, ag::concat_cols({z_vec, obs_emb}));
    return split_gauss(t, pre);
  }

  Var decode_action(Tape& t, Var s) const { return action_dec_.apply(t, s); }

  Var decode_frame(Tape& t, Var s) const {
    Var hcur = dec_fc_.apply(t, s);
    for (size_t i = 0; i < dec_convs_.size(); ++i) {
      hcur = dec_convs_[i]->apply(t, hcur);
      hcur = (i + 1 < dec_convs_.size()) ? ag::elu(hcur) : ag::tanh_op(hcur);
    }
    return hcur;
  }

  ForwardOut forward(Tape& t, const Batch& batch, const SampleFlags& flags) const {
    if (batch.B < 1 || batch.T < 1) throw ArgumentError("forward: empty batch");
    return cfg_.mode == Mode::kFrame ? forward_frame(t, batch, flags)
                                     : forward_control(t, batch, flags);
  }

  // --- inference helpers for skill execution -------------------------------

  // Mean abstraction for (skill z, observation embedding), control mode.
  Eigen::RowVectorXf abstraction_mean_infer(int z, const Eigen::RowVectorXf& obs_emb) const {
    Eigen::RowVectorXf in(2 * cfg_.hidden);
    in << codebook_.v.row(z), obs_emb;
    Mat pre = post_s_head_.infer(in);
    return pre.leftCols(cfg_.s_dim);
  }

  int greedy_action_infer(const Eigen::RowVectorXf& s_mean) const {
    Mat logits = action_dec_.infer(s_mean);
    Eigen::Index best;
    logits.row(0).maxCoeff(&best);
    return static_cast<int>(best);
  }

  const nn::CausalTcn& boundary_tcn() const { return tcn_; }
  const ag::Param& codebook() const { return codebook_; }

 private:
  static GaussOut split_gauss_impl(Tape& t, Var pre, int s_dim) {
    Var mean = ag::slice_cols(pre, 0, s_dim);
    Var std = ag::add_const(ag::softplus(ag::slice_cols(pre, s_dim, s_dim)), 1e-4f);
    return {mean, std};
  }
  GaussOut split_gauss(Tape& t, Var pre) const { return split_gauss_impl(t, pre, cfg_.s_dim); }

  Var gauss_sample(Tape& t, const GaussOut& g, const Batch& batch,
                   const SampleFlags& flags) const {
    Mat eps;
    if (flags.gauss_noise) eps = *flags.gauss_noise;
    else if (flags.rng) eps = flags.rng->normal_matrix(g.mean.rows(), cfg_.s_dim);
    else eps = Mat::Zero(g.mean.rows(), cfg_.s_dim);
    return ag::add(g.mean, ag::mul(g.std, ag::constant(t, eps)));
  }

  // Shift time-major rows one step into the past (zeros at t=1).
  static Var shift_back(Var x, int B, int T) {
    Var stacked = ag::causal_stack(x, B, T, 2);
    return ag::slice_cols(stacked, 0, x.cols());
  }

  // Copy-semantics chain: z_t = m_t * cand_t + (1-m_t) * z_{t-1}.
  struct ZChain {
    Var z_vec;
    std::vector<int> effective;
  };
  ZChain z_copy_chain(Tape& t, Var cand_vec, const std::vector<int>& cand_idx, Var m,
                      const Mat& m_hard, int B, int T) const {
    std::vector<Var> steps;
    steps.reserve(T);
    Var ones = ag::constant(t, Mat::Ones(B, 1));
    Var z_prev = ag::constant(t, Mat::Zero(B, cand_vec.cols()));
    std::vector<int> eff(static_cast<size_t>(B) * T, 0);
    for (int step = 0; step < T; ++step) {
      Var m_t = ag::slice_rows(m, static_cast<Eigen::Index>(step) * B, B);
      Var cand_t = ag::slice_rows(cand_vec, static_cast<Eigen::Index>(step) * B, B);
      Var z_t = ag::add(ag::scale_rows(cand_t, m_t), ag::scale_rows(z_prev, ag::sub(ones, m_t)));
      steps.push_back(z_t);
      z_prev = z_t;
      for (int b = 0; b < B; ++b) {
        size_t i = static_cast<size_t>(step) * B + b;
        eff[i] = (step == 0 || m_hard(static_cast<Eigen::Index>(i), 0) > 0.5f)
                     ? cand_idx[i]
                     : eff[i - static_cast<size_t>(B)];
      }
    }
    return {ag::concat_rows(steps), std::move(eff)};
  }

  ForwardOut forward_control(Tape& t, const Batch& batch, const SampleFlags& flags) const {
    const int B = batch.B, T = batch.T;
    ForwardOut out;
    out.B = B;
    out.T = T;
    out.mask = batch.mask;
    out.mask_var = ag::constant(t, batch.mask);

    Var x = ag::constant(t, batch.x);
    Var xe = ag::scale_rows(encode_observations(t, x), out.mask_var);
    Var ae = action_embed_.apply(t, batch.actions);
    Var je = ag::scale_rows(fuse_.apply(t, ag::concat_cols({xe, ae})), out.mask_var);

    out.m_logits = boundary_logits(t, xe, B, T);
    out.q_m1 = ag::slice_cols(ag::softmax_rows(out.m_logits), 0, 1);
    BoundaryOptions bopt;
    bopt.temperature = flags.temperature;
    bopt.hard = flags.hard;
    bopt.min_length = flags.train_mask ? cfg_.t_min : 0;
    bopt.rng = flags.rng;
    bopt.noise = flags.gumbel_noise;
    bopt.forced = flags.forced_m;
    bopt.valid = &batch.mask;
    auto ms = sample_boundaries(t, out.m_logits, B, T, bopt);
    out.m = ms.m;
    out.m_soft = ms.soft;
    out.m_hard = ms.hard_values;

    Var query = skill_query(t, je, B, T);
    auto post = skill_posterior(t, query);
    out.z_probs = post.probs;
    auto zs = vq_sample(t, post, ag::param(t, const_cast<ag::Param&>(codebook_)), flags.hard,
                        flags.rng, flags.forced_z);
    out.z_candidate = zs.indices;
    auto chain = z_copy_chain(t, zs.vectors, zs.indices, out.m, out.m_hard, B, T);
    out.z_vec = chain.z_vec;
    out.z_effective = std::move(chain.effective);

    auto gauss = abstraction_posterior(t, out.z_vec, xe);
    out.s_mean = gauss.mean;
    out.s_std = gauss.std;
    out.s_sample = gauss_sample(t, gauss, batch, flags);

    Var s_prev = shift_back(out.s_sample, B, T);
    auto prior = split_gauss(t, prior_s_head_.apply(t, s_prev));
    out.prior_s_mean = prior.mean;
    out.prior_s_std = prior.std;
    out.prior_m_logits = prior_m_head_.apply(t, s_prev);

    Var log_pa = ag::log_softmax_rows(decode_action(t, out.s_sample));
    Var picked = ag::select_col_per_row(log_pa, batch.actions);
    out.recon_nll = ag::scale_rows(ag::neg(picked), out.mask_var);
    return out;
  }

  ForwardOut forward_frame(Tape& t, const Batch& batch, const SampleFlags& flags) const {
    const int B = batch.B, T = batch.T;
    ForwardOut out;
    out.B = B;
    out.T = T;
    out.mask = batch.mask;
    out.mask_var = ag::constant(t, batch.mask);

    Var x = ag::constant(t, batch.x);
    Var xe = ag::scale_rows(encode_observations(t, x), out.mask_var);

    out.m_logits = boundary_logits(t, xe, B, T);
    out.q_m1 = ag::slice_cols(ag::softmax_rows(out.m_logits), 0, 1);
    BoundaryOptions bopt;
    bopt.temperature = flags.temperature;
    bopt.hard = flags.hard;
    bopt.min_length = flags.train_mask ? cfg_.t_min : 0;
    bopt.rng = flags.rng;
    bopt.noise = flags.gumbel_noise;
    bopt.forced = flags.forced_m;
    bopt.valid = &batch.mask;
    auto ms = sample_boundaries(t, out.m_logits, B, T, bopt);
    out.m = ms.m;
    out.m_soft = ms.soft;
    out.m_hard = ms.hard_values;

    Var query = skill_query(t, xe, B, T);
    auto post = skill_posterior(t, query);
    out.z_probs = post.probs;
    auto zs = vq_sample(t, post, ag::param(t, const_cast<ag::Param&>(codebook_)), flags.hard,
                        flags.rng, flags.forced_z);
    out.z_candidate = zs.indices;
    auto chain = z_copy_chain(t, zs.vectors, zs.indices, out.m, out.m_hard, B, T);
    out.z_vec = chain.z_vec;
    out.z_effective = std::move(chain.effective);

    // posterior abstraction from the previous bottom-up state and z_t
    Var henc = gru_s_fwd_.seq(t, xe, B, T, false);
    Var henc_prev = shift_back(henc, B, T);
    auto gauss = split_gauss(t, post_s_head_.apply(t, ag::concat_cols({henc_prev, out.z_vec})));
    out.s_mean = gauss.mean;
    out.s_std = gauss.std;
    out.s_sample = gauss_sample(t, gauss, batch, flags);

    // belief recurrences with boundary-gated resets
    Var ones = ag::constant(t, Mat::Ones(B, 1));
    Var c_prev = ag::constant(t, Mat::Zero(B, cfg_.hidden));
    Var h_prev = ag::constant(t, Mat::Zero(B, cfg_.hidden));
    std::vector<Var> s_steps, prior_ctx_steps;
    s_steps.reserve(T);
    prior_ctx_steps.reserve(T);
    for (int step = 0; step < T; ++step) {
      Eigen::Index r0 = static_cast<Eigen::Index>(step) * B;
      Var m_t = ag::slice_rows(out.m, r0, B);
      Var not_m = ag::sub(ones, m_t);
      Var z_t = ag::slice_rows(out.z_vec, r0, B);
      Var shat_t = ag::slice_rows(out.s_sample, r0, B);

      Var c_t = ag::add(ag::scale_rows(gru_c_.step(t, z_t, c_prev), m_t),
                        ag::scale_rows(c_prev, not_m));
      // context available before seeing the current abstraction sample
      Var u_t = ag::add(ag::scale_rows(c_prev, m_t), ag::scale_rows(h_prev, not_m));
      Var h_in = ag::concat_cols({shat_t, c_t, z_t});
      Var h_t = ag::add(ag::scale_rows(c_prev, m_t),
                        ag::scale_rows(gru_h_.step(t, h_in, h_prev), not_m));
      Var s_t = abs_proj_.apply(t, ag::concat_cols({h_t, shat_t}));
      s_steps.push_back(s_t);
      prior_ctx_steps.push_back(u_t);
      c_prev = c_t;
      h_prev = h_t;
    }
    Var s_full = ag::concat_rows(s_steps);       // (T*B x hidden)
    Var prior_ctx = ag::concat_rows(prior_ctx_steps);

    auto prior = split_gauss(t, prior_s_head_.apply(t, ag::concat_cols({prior_ctx, out.z_vec})));
    out.prior_s_mean = prior.mean;
    out.prior_s_std = prior.std;
    out.prior_m_logits = prior_m_head_.apply(t, shift_back(s_full, B, T));

    Var recon = decode_frame(t, s_full);
    Var err = ag::sub(ag::constant(t, batch.x), recon);
    out.recon_nll = ag::scale_rows(ag::scale(ag::sum_cols(ag::square(err)), 0.5f), out.mask_var);
    return out;
  }

  ModelConfig cfg_;
  nn::ParamRegistry params_;

  std::vector<std::unique_ptr<nn::Conv2dLayer>> enc_convs_;
  std::vector<std::unique_ptr<nn::ConvT2dLayer>> dec_convs_;
  nn::Linear enc_fc_, enc_fc2_, dec_fc_;
  nn::Embedding action_embed_;
  nn::Linear fuse_;
  nn::CausalTcn tcn_;
  nn::Gru gru_z_fwd_, gru_z_bwd_, gru_s_fwd_, gru_c_, gru_h_;
  nn::Linear z_query_1_, z_query_2_;
  ag::Param codebook_;
  nn::Linear post_s_head_, prior_s_head_, abs_proj_, prior_m_head_;
  nn::Mlp action_dec_;
};

}  // namespace mdlopt::model
