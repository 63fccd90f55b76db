#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "prionvit/rng.hpp"
#include "prionvit/specklegen.hpp"
#include "prionvit/tensor.hpp"

namespace prionvit::pipeline {

// Model input: H x W x 3 channels (intensity, |gx|, |gy|), each in [0, 1].
struct Sample {
  Tensor image;
  double label = 0.0;
};

struct SobelResult {
  Tensor gx;
  Tensor gy;
  Tensor magnitude;
};

// 3x3 Sobel (correlation form, so a rising ramp has positive gx) with
// reflect-101 padding; output has the input size. Requires H, W >= 3.
SobelResult sobel(const Tensor& gray);

// Bilinear resize with corner-aligned sampling. Accepts H x W or H x W x C.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

Tensor to_tensor(const speckle::SpeckleImage& image);

// Rescales to [0, 1]; a zero-range input becomes all zeros.
void min_max_normalize(std::span<double> values);

// Sobel -> per-channel min-max -> bilinear resize to out_size x out_size x 3.
Tensor preprocess(const speckle::SpeckleImage& image, std::size_t out_size = 128);

struct AugmentConfig {
  bool enabled = true;
  double noise_sigma = 0.02;
  double flip_horizontal_prob = 0.5;
  double flip_vertical_prob = 0.5;
  double brightness_delta = 0.1;
  double rotation_deg = 15.0;

  void validate() const;
  static AugmentConfig identity();
};

Tensor rotate_bilinear(const Tensor& image, double degrees);
Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);

// rotate -> flip -> brightness -> noise, then clamp to [0, 1]. Label is kept.
Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

struct SplitSpec {
  double train_frac = 0.7;
  double test_frac = 0.2;
  double val_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> val;
};

// Seeded shuffle, then floor(train*n) / floor(test*n) / remainder.
Split split_dataset(std::size_t n, const SplitSpec& spec);

std::vector<std::size_t> shuffled(std::span<const std::size_t> indices, Rng& rng);

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                   Rng& rng, bool drop_last = false);

struct Dataset {
  std::vector<Sample> samples;
  std::size_t input_size = 0;

  std::size_t size() const { return samples.size(); }
};

// Loads and preprocesses every manifest image. With a cache directory,
// preprocessed tensors are reused from / written to <cache_dir>.
Dataset load_dataset(const speckle::Manifest& manifest, std::size_t input_size,
                     const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

// Stacks samples[indices] into B x H x W x 3, labels into B x 1.
Tensor stack_images(const std::vector<Sample>& samples, std::span<const std::size_t> indices);
Tensor stack_labels(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

// Preprocessed sample cache: 16-byte header ("SPKL", u16 version, u16
// channels, u32 height, u32 width) then channel-planar little-endian doubles.
inline constexpr std::uint16_t kCacheVersion = 1;
void write_cache(const std::filesystem::path& path, const Tensor& image);
Tensor read_cache(const std::filesystem::path& path);

}  // namespace prionvit::pipeline
