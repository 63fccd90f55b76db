#include <algorithm>
#include <cmath>
#include <numbers>

#include "prionvit/pipeline.hpp"

namespace prionvit::pipeline {

namespace {

// Continuous reflect-101 about the first and last pixel centers.
double reflect_coord(double x, std::size_t n) {
  if (n == 1) return 0.0;
  const double last = static_cast<double>(n - 1);
  const double period = 2.0 * last;
  x = std::fmod(std::abs(x), period);
  return x > last ? period - x : x;
}

void check_hwc(const Tensor& image, const char* op) {
  if (image.rank() != 3) throw ShapeError(std::string(op) + " expects H x W x C, got " + shape_str(image.shape()));
}

}  // namespace

void AugmentConfig::validate() const {
  const bool finite = std::isfinite(noise_sigma) && std::isfinite(flip_horizontal_prob) &&
                      std::isfinite(flip_vertical_prob) && std::isfinite(brightness_delta) &&
                      std::isfinite(rotation_deg);
  if (!finite) throw std::invalid_argument("augment config values must be finite");
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be >= 0");
  if (brightness_delta < 0.0 || rotation_deg < 0.0) {
    throw std::invalid_argument("brightness_delta and rotation_deg are half-widths and must be >= 0");
  }
  for (double p : {flip_horizontal_prob, flip_vertical_prob}) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("flip probabilities must lie in [0, 1]");
  }
}

AugmentConfig AugmentConfig::identity() {
  return AugmentConfig{true, 0.0, 0.0, 0.0, 0.0, 0.0};
}

Tensor rotate_bilinear(const Tensor& image, double degrees) {
  check_hwc(image, "rotate_bilinear");
  if (degrees == 0.0) return image;
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = 0.5 * (static_cast<double>(h) - 1.0);
  const double cx = 0.5 * (static_cast<double>(w) - 1.0);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // Inverse map: sample the source at the pre-rotation position.
      const double dx = static_cast<double>(c) - cx;
      const double dy = static_cast<double>(r) - cy;
      const double sx = reflect_coord(cs * dx + sn * dy + cx, w);
      const double sy = reflect_coord(-sn * dx + cs * dy + cy, h);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1);
      const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      for (std::size_t k = 0; k < ch; ++k) {
        const double v00 = image[(y0 * w + x0) * ch + k];
        const double v01 = image[(y0 * w + x1) * ch + k];
        const double v10 = image[(y1 * w + x0) * ch + k];
        const double v11 = image[(y1 * w + x1) * ch + k];
        const double top = v00 + (v01 - v00) * fx;
        const double bottom = v10 + (v11 - v10) * fx;
        out[(r * w + c) * ch + k] = top + (bottom - top) * fy;
      }
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  check_hwc(image, "flip_horizontal");
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < ch; ++k) out[(r * w + c) * ch + k] = image[(r * w + (w - 1 - c)) * ch + k];
  return out;
}

Tensor flip_vertical(const Tensor& image) {
  check_hwc(image, "flip_vertical");
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  Tensor out(image.shape());
  const std::size_t row = w * ch;
  for (std::size_t r = 0; r < h; ++r) std::copy_n(image.ptr() + (h - 1 - r) * row, row, out.ptr() + r * row);
  return out;
}

Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng) {
  config.validate();
  if (!config.enabled) return sample;
  // Draw every variate unconditionally so the stream layout does not depend
  // on which transforms are active.
  const double angle = rng.uniform(-config.rotation_deg, config.rotation_deg);
  const bool fh = rng.bernoulli(config.flip_horizontal_prob);
  const bool fv = rng.bernoulli(config.flip_vertical_prob);
  const double brightness = rng.uniform(-config.brightness_delta, config.brightness_delta);

  Sample out{rotate_bilinear(sample.image, config.rotation_deg > 0.0 ? angle : 0.0), sample.label};
  if (fh) out.image = flip_horizontal(out.image);
  if (fv) out.image = flip_vertical(out.image);
  for (double& v : out.image.data()) {
    v += brightness;
    if (config.noise_sigma > 0.0) v += config.noise_sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace prionvit::pipeline
