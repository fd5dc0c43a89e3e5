#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "mdlopt/errors.hpp"
#include "mdlopt/grid.hpp"

namespace mdlopt::model {

enum class Mode { kFrame, kControl };

inline std::string mode_name(Mode m) { return m == Mode::kFrame ? "frame" : "control"; }

inline Mode mode_from_name(const std::string& s) {
  if (s == "frame") return Mode::kFrame;
  if (s == "control") return Mode::kControl;
  throw ArgumentError("unknown model mode: " + s);
}

// Hyperparameters of the latent segmentation model. Defaults follow the
// reference configuration; desk-scale runs narrow the widths via config.
struct ModelConfig {
  Mode mode = Mode::kControl;

  int n_skills = 10;      // K: codebook size
  int s_dim = 8;          // abstraction dimension
  int hidden = 128;       // GRU / embedding width
  int conv_channels = 0;  // 0 = per-mode default (frame 128, control 64)
  int tcn_width = 0;      // 0 = hidden
  int tcn_layers = 5;     // hidden causal conv layers (head excluded)
  int tcn_kernel = 5;

  float t_vq = 0.1f;                   // skill-posterior temperature
  float gumbel_temperature = 1.0f;     // boundary relaxation temperature (start)
  float gumbel_temperature_end = 0.0f; // 0 = no annealing
  int t_min = 3;                       // minimum skill length (training mask)
  float beta = 1.0f;                   // KL weight

  // input geometry
  int frame_size = 32;                  // frame mode; power of two, >= 8
  int obs_planes = grid::kObsPlanes;    // control mode
  int obs_grid = grid::kSize;
  int n_actions = grid::kNumActions;

  int conv_channels_resolved() const {
    if (conv_channels > 0) return conv_channels;
    return mode == Mode::kFrame ? 128 : 64;
  }
  int tcn_width_resolved() const { return tcn_width > 0 ? tcn_width : hidden; }

  int obs_dim() const {
    return mode == Mode::kFrame ? 3 * frame_size * frame_size : obs_planes * obs_grid * obs_grid;
  }

  float gumbel_temp_at(int64_t iter, int64_t total_iters) const {
    if (gumbel_temperature_end <= 0.0f || total_iters <= 0) return gumbel_temperature;
    float frac = std::min(1.0f, static_cast<float>(iter) / static_cast<float>(total_iters));
    return gumbel_temperature + (gumbel_temperature_end - gumbel_temperature) * frac;
  }

  void validate() const {
    if (n_skills < 2) throw ArgumentError("n_skills must be >= 2");
    if (t_min < 1) throw ArgumentError("t_min must be >= 1");
    if (t_vq <= 0.0f || gumbel_temperature <= 0.0f)
      throw ArgumentError("temperatures must be > 0");
    if (s_dim < 1 || hidden < 4) throw ArgumentError("bad latent dimensions");
    if (mode == Mode::kFrame) {
      int fs = frame_size;
      if (fs < 8) throw ArgumentError("frame_size must be >= 8");
      while (fs > 4 && fs % 2 == 0) fs /= 2;
      if (fs != 4) throw ArgumentError("frame mode needs frame_size in {8,16,32,64,...}");
    }
  }

  nlohmann::json to_json() const {
    return {
        {"mode", mode_name(mode)},
        {"n_skills", n_skills},
        {"s_dim", s_dim},
        {"hidden", hidden},
        {"conv_channels", conv_channels},
        {"tcn_width", tcn_width},
        {"tcn_layers", tcn_layers},
        {"tcn_kernel", tcn_kernel},
        {"t_vq", t_vq},
        {"gumbel_temperature", gumbel_temperature},
        {"gumbel_temperature_end", gumbel_temperature_end},
        {"t_min", t_min},
        {"beta", beta},
        {"frame_size", frame_size},
        {"obs_planes", obs_planes},
        {"obs_grid", obs_grid},
        {"n_actions", n_actions},
    };
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.n_skills = j.at("n_skills").get<int>();
    c.s_dim = j.at("s_dim").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.conv_channels = j.at("conv_channels").get<int>();
    c.tcn_width = j.at("tcn_width").get<int>();
    c.tcn_layers = j.at("tcn_layers").get<int>();
    c.tcn_kernel = j.at("tcn_kernel").get<int>();
    c.t_vq = j.at("t_vq").get<float>();
    c.gumbel_temperature = j.at("gumbel_temperature").get<float>();
    c.gumbel_temperature_end = j.at("gumbel_temperature_end").get<float>();
    c.t_min = j.at("t_min").get<int>();
    c.beta = j.at("beta").get<float>();
    c.frame_size = j.at("frame_size").get<int>();
    c.obs_planes = j.at("obs_planes").get<int>();
    c.obs_grid = j.at("obs_grid").get<int>();
    c.n_actions = j.at("n_actions").get<int>();
    return c;
  }
};

}  // namespace mdlopt::model
