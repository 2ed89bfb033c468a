#pragma once

#include <string>
#include <vector>

#include "lvt/codec.hpp"
#include "lvt/latent.hpp"
#include "lvt/rng.hpp"
#include "lvt/tensor.hpp"
#include "lvt/transformer.hpp"

namespace lvt {

// ---- synthetic data ---------------------------------------------------------

enum class SyntheticKind { MovingSquare, BouncingTwoSquares, StaticNoise };

SyntheticKind synthetic_kind_from_string(const std::string& s);
std::string to_string(SyntheticKind k);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::MovingSquare;
  int count = 16;  // videos to generate
  int T = 16, H = 32, W = 32;
  int square = 8;           // sprite edge length
  int vmin = 1, vmax = 2;   // per-axis speed range (pixels per frame)
  uint64_t seed = 0;
  void validate() const;
};

// deterministic for a fixed seed; sprites bounce off frame edges
std::vector<Tensor> generate_synthetic(const SyntheticSpec& spec);

// sprite top-left corner track for one axis, exposed for the simulation oracle
std::vector<int> bounce_track(int start, int velocity, int frames, int extent, int size);

// ---- binary formats (all little-endian) ---------------------------------------

enum class VideoDtype : uint8_t { U8 = 0, F32 = 1 };

void write_video(const std::string& path, const Tensor& video, VideoDtype dtype);
Tensor read_video(const std::string& path);

void write_latents(const std::string& path, const LatentGrid& grid);
LatentGrid read_latents(const std::string& path);

// checkpoints carry the config text, parameters, Adam state, step counter and
// (for codecs) the codebook EMA state
void save_codec_checkpoint(const std::string& path, const FrameCodec& codec,
                           const std::string& config_text);
struct LoadedCodec {
  FrameCodec codec;
  std::string config_text;
  uint64_t config_digest;
};
LoadedCodec load_codec_checkpoint(const std::string& path);

void save_lvt_checkpoint(const std::string& path, const LatentTransformer& model,
                         const std::string& config_text);
struct LoadedLvt {
  LatentTransformer model;
  std::string config_text;
  uint64_t config_digest;
};
LoadedLvt load_lvt_checkpoint(const std::string& path);

// ---- frame images (binary PPM) -------------------------------------------------

void write_ppm(const std::string& path, const Tensor& frame);  // [H,W,3] in [0,1]
Tensor read_ppm(const std::string& path);

// ---- dataset directories --------------------------------------------------------

// writes <dir>/train/video_%05d.lvtv, <dir>/test/..., and a manifest
void write_dataset(const std::string& dir, const SyntheticSpec& spec,
                   const std::vector<Tensor>& train, const std::vector<Tensor>& test);
std::vector<Tensor> load_video_dir(const std::string& dir);

}  // namespace lvt
