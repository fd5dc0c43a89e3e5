#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdlopt/errors.hpp"
#include "mdlopt/io/container.hpp"
#include "mdlopt/rng.hpp"

// Synthetic frame-sequence datasets: sequences of monochromatic frames in
// repeating 3-frame patterns, used to probe whether a sequence model recovers
// the pattern boundaries.
namespace mdlopt::colors {

enum class Variant : uint8_t { kSimple = 0, kConditional = 1 };

// Display colors. RGB values are fixed constants in [-1, 1]; frames are
// monochromatic so any distinct triples work.
enum ColorId : uint8_t { kYellow = 0, kBlue = 1, kGreen = 2, kPurple = 3 };

inline std::array<float, 3> color_rgb(uint8_t c) {
  switch (c) {
    case kYellow: return {1.0f, 1.0f, -1.0f};
    case kBlue: return {-1.0f, -1.0f, 1.0f};
    case kGreen: return {-1.0f, 1.0f, -1.0f};
    case kPurple: return {0.6f, -1.0f, 1.0f};
    default: throw ArgumentError("unknown color id");
  }
}

inline const char* color_name(uint8_t c) {
  switch (c) {
    case kYellow: return "yellow";
    case kBlue: return "blue";
    case kGreen: return "green";
    case kPurple: return "purple";
    default: return "?";
  }
}

struct FrameSequence {
  static constexpr int kPatterns = 6;
  static constexpr int kFramesPerPattern = 3;
  static constexpr int kFrames = kPatterns * kFramesPerPattern;  // 18

  // Pattern labels as drawn from the base process (before any recoloring)
  // and as displayed (after recoloring, for the conditional variant).
  std::array<uint8_t, kPatterns> base_labels{};
  std::array<uint8_t, kPatterns> display_labels{};

  // A new pattern begins every 3 frames; 1-indexed, always contains t=1.
  static std::vector<int> true_boundaries() { return {1, 4, 7, 10, 13, 16}; }

  uint8_t display_color_at_frame(int t0) const {  // 0-indexed frame
    return display_labels[static_cast<size_t>(t0) / kFramesPerPattern];
  }
};

struct ColorDataset {
  Variant variant = Variant::kSimple;
  uint64_t seed = 0;
  int frame_size = 32;
  std::vector<FrameSequence> sequences;

  int frame_dim() const { return 3 * frame_size * frame_size; }

  // Materialize one sequence as an (18 x 3*H*W) matrix, channel-major per
  // frame. Frames are a pure function of the display labels.
  Eigen::MatrixXf frames_of(size_t i) const {
    const auto& s = sequences.at(i);
    const int hw = frame_size * frame_size;
    Eigen::MatrixXf f(FrameSequence::kFrames, frame_dim());
    for (int t = 0; t < FrameSequence::kFrames; ++t) {
      auto rgb = color_rgb(s.display_color_at_frame(t));
      for (int c = 0; c < 3; ++c) f.row(t).segment(c * hw, hw).setConstant(rgb[c]);
    }
    return f;
  }
};

namespace detail {
inline void validate_args(int n_sequences, int frame_size) {
  if (n_sequences < 1) throw ArgumentError("n_sequences must be >= 1");
  if (frame_size < 8) throw ArgumentError("frame_size must be >= 8");
}
}  // namespace detail

// Patterns drawn i.i.d. yellow/blue/green with probability 0.4/0.4/0.2.
inline ColorDataset generate_simple_colors(uint64_t seed, int n_sequences, int frame_size = 32) {
  detail::validate_args(n_sequences, frame_size);
  ColorDataset ds;
  ds.variant = Variant::kSimple;
  ds.seed = seed;
  ds.frame_size = frame_size;
  Rng rng(derive_seed(seed, 0xC0102u));
  ds.sequences.resize(static_cast<size_t>(n_sequences));
  for (auto& s : ds.sequences) {
    for (int p = 0; p < FrameSequence::kPatterns; ++p) {
      float u = rng.uniform();
      uint8_t label = u < 0.4f ? kYellow : (u < 0.8f ? kBlue : kGreen);
      s.base_labels[p] = label;
      s.display_labels[p] = label;
    }
  }
  return ds;
}

// Patterns drawn i.i.d. uniform over yellow/blue/green; a yellow pattern is
// displayed purple when the previous drawn pattern was blue or yellow. The
// first pattern of a sequence has no predecessor and is never recolored.
inline ColorDataset generate_conditional_colors(uint64_t seed, int n_sequences,
                                                int frame_size = 32) {
  detail::validate_args(n_sequences, frame_size);
  ColorDataset ds;
  ds.variant = Variant::kConditional;
  ds.seed = seed;
  ds.frame_size = frame_size;
  Rng rng(derive_seed(seed, 0xC0103u));
  ds.sequences.resize(static_cast<size_t>(n_sequences));
  for (auto& s : ds.sequences) {
    for (int p = 0; p < FrameSequence::kPatterns; ++p) {
      uint8_t label = static_cast<uint8_t>(rng.uniform_int(0, 2));
      s.base_labels[p] = label;
      bool recolor = p > 0 && label == kYellow &&
                     (s.base_labels[p - 1] == kBlue || s.base_labels[p - 1] == kYellow);
      s.display_labels[p] = recolor ? kPurple : label;
    }
  }
  return ds;
}

inline ColorDataset generate_colors(Variant v, uint64_t seed, int n_sequences,
                                    int frame_size = 32) {
  return v == Variant::kSimple ? generate_simple_colors(seed, n_sequences, frame_size)
                               : generate_conditional_colors(seed, n_sequences, frame_size);
}

// ---------------------------------------------------------------------------
// dataset file format

inline void write_dataset(const ColorDataset& ds, const std::string& path) {
  io::Container c(io::ContainerKind::kColorDataset);
  c.meta()["variant"] = ds.variant == Variant::kSimple ? "simple" : "conditional";
  c.meta()["seed"] = ds.seed;
  c.meta()["frame_size"] = ds.frame_size;
  c.meta()["n_sequences"] = ds.sequences.size();
  c.meta()["frames_per_sequence"] = FrameSequence::kFrames;
  c.meta()["true_boundaries"] = FrameSequence::true_boundaries();

  std::vector<uint8_t> base, display;
  base.reserve(ds.sequences.size() * FrameSequence::kPatterns);
  display.reserve(base.capacity());
  for (const auto& s : ds.sequences) {
    base.insert(base.end(), s.base_labels.begin(), s.base_labels.end());
    display.insert(display.end(), s.display_labels.begin(), s.display_labels.end());
  }
  c.put_u8("base_labels", base);
  c.put_u8("display_labels", display);

  // Full frame array, sequence-major then time-major rows.
  std::vector<float> frames;
  frames.reserve(ds.sequences.size() * FrameSequence::kFrames *
                 static_cast<size_t>(ds.frame_dim()));
  for (size_t i = 0; i < ds.sequences.size(); ++i) {
    Eigen::MatrixXf f = ds.frames_of(i);
    for (int t = 0; t < f.rows(); ++t)
      for (int d = 0; d < f.cols(); ++d) frames.push_back(f(t, d));
  }
  c.put_f32("frames", frames);
  c.write(path);
}

inline ColorDataset read_dataset(const std::string& path) {
  io::Container c = io::Container::read(path, io::ContainerKind::kColorDataset);
  ColorDataset ds;
  std::string variant = c.meta().at("variant").get<std::string>();
  if (variant == "simple") ds.variant = Variant::kSimple;
  else if (variant == "conditional") ds.variant = Variant::kConditional;
  else throw CorruptFileError("color dataset: unknown variant " + variant);
  ds.seed = c.meta().at("seed").get<uint64_t>();
  ds.frame_size = c.meta().at("frame_size").get<int>();
  size_t n = c.meta().at("n_sequences").get<size_t>();

  auto base = c.get_u8("base_labels");
  auto display = c.get_u8("display_labels");
  if (base.size() != n * FrameSequence::kPatterns || display.size() != base.size())
    throw CorruptFileError("color dataset: label blob size mismatch");
  auto frames = c.get_f32("frames");
  if (frames.size() != n * FrameSequence::kFrames * static_cast<size_t>(ds.frame_dim()))
    throw CorruptFileError("color dataset: frame blob size mismatch");

  ds.sequences.resize(n);
  for (size_t i = 0; i < n; ++i) {
    for (int p = 0; p < FrameSequence::kPatterns; ++p) {
      ds.sequences[i].base_labels[p] = base[i * FrameSequence::kPatterns + p];
      ds.sequences[i].display_labels[p] = display[i * FrameSequence::kPatterns + p];
    }
  }
  return ds;
}

}  // namespace mdlopt::colors
