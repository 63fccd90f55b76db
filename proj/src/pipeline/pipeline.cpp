#include "prionvit/pipeline.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>

#include "prionvit/image_io.hpp"

namespace prionvit::pipeline {

namespace {

std::size_t reflect101(long i, std::size_t n) {
  const long last = static_cast<long>(n) - 1;
  if (last == 0) return 0;
  while (i < 0 || i > last) {
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

SobelResult sobel(const Tensor& gray) {
  if (gray.rank() != 2 || gray.dim(0) < 3 || gray.dim(1) < 3) {
    throw ShapeError("sobel needs an H x W image with H, W >= 3, got " + shape_str(gray.shape()));
  }
  const std::size_t h = gray.dim(0), w = gray.dim(1);
  SobelResult out{Tensor(gray.shape()), Tensor(gray.shape()), Tensor(gray.shape())};
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t ru = reflect101(static_cast<long>(r) - 1, h);
    const std::size_t rd = reflect101(static_cast<long>(r) + 1, h);
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t cl = reflect101(static_cast<long>(c) - 1, w);
      const std::size_t cr = reflect101(static_cast<long>(c) + 1, w);
      auto px = [&](std::size_t rr, std::size_t cc) { return gray[rr * w + cc]; };
      const double gx = (px(ru, cr) - px(ru, cl)) + 2.0 * (px(r, cr) - px(r, cl)) + (px(rd, cr) - px(rd, cl));
      const double gy = (px(rd, cl) - px(ru, cl)) + 2.0 * (px(rd, c) - px(ru, c)) + (px(rd, cr) - px(ru, cr));
      out.gx[r * w + c] = gx;
      out.gy[r * w + c] = gy;
      out.magnitude[r * w + c] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 2 && image.rank() != 3) {
    throw ShapeError("resize_bilinear expects H x W or H x W x C, got " + shape_str(image.shape()));
  }
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_bilinear: target extents must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1);
  const std::size_t ch = image.rank() == 3 ? image.dim(2) : 1;
  if (h == out_h && w == out_w) return image;

  Shape os = image.rank() == 3 ? Shape{out_h, out_w, ch} : Shape{out_h, out_w};
  Tensor out(os);
  auto src_coord = [](std::size_t dst, std::size_t n_out, std::size_t n_in) {
    if (n_out == 1) return 0.0;
    return static_cast<double>(dst) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  };
  for (std::size_t r = 0; r < out_h; ++r) {
    const double sy = src_coord(r, out_h, h);
    const std::size_t y0 = std::min(static_cast<std::size_t>(sy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double sx = src_coord(c, out_w, w);
      const std::size_t x0 = std::min(static_cast<std::size_t>(sx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t k = 0; k < ch; ++k) {
        const double v00 = image[(y0 * w + x0) * ch + k];
        const double v01 = image[(y0 * w + x1) * ch + k];
        const double v10 = image[(y1 * w + x0) * ch + k];
        const double v11 = image[(y1 * w + x1) * ch + k];
        const double top = v00 + (v01 - v00) * fx;
        const double bottom = v10 + (v11 - v10) * fx;
        out[(r * out_w + c) * ch + k] = top + (bottom - top) * fy;
      }
    }
  }
  return out;
}

Tensor to_tensor(const speckle::SpeckleImage& image) {
  return Tensor(Shape{image.height, image.width}, image.pixels);
}

void min_max_normalize(std::span<double> values) {
  if (values.empty()) return;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double a = *lo, range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  for (double& v : values) v = std::clamp((v - a) / range, 0.0, 1.0);
}

Tensor preprocess(const speckle::SpeckleImage& image, std::size_t out_size) {
  if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
    throw std::invalid_argument("preprocess: malformed image");
  }
  const Tensor gray = to_tensor(image);
  const SobelResult grad = sobel(gray);
  const std::size_t h = image.height, w = image.width, n = h * w;
  std::vector<double> intensity(gray.data().begin(), gray.data().end());
  std::vector<double> ax(n), ay(n);
  for (std::size_t i = 0; i < n; ++i) {
    ax[i] = std::abs(grad.gx[i]);
    ay[i] = std::abs(grad.gy[i]);
  }
  min_max_normalize(intensity);
  min_max_normalize(ax);
  min_max_normalize(ay);
  Tensor stacked(Shape{h, w, 3});
  for (std::size_t i = 0; i < n; ++i) {
    stacked[i * 3 + 0] = intensity[i];
    stacked[i * 3 + 1] = ax[i];
    stacked[i * 3 + 2] = ay[i];
  }
  return resize_bilinear(stacked, out_size, out_size);
}

void SplitSpec::validate() const {
  if (!(train_frac > 0.0) || !(test_frac > 0.0) || !(val_frac > 0.0)) {
    throw std::invalid_argument("split fractions must be positive");
  }
  if (std::abs(train_frac + test_frac + val_frac - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

std::vector<std::size_t> shuffled(std::span<const std::size_t> indices, Rng& rng) {
  std::vector<std::size_t> out(indices.begin(), indices.end());
  for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng.uniform_index(i)]);
  return out;
}

Split split_dataset(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n == 0) throw std::invalid_argument("split_dataset: empty manifest");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng rng = Rng::derive(spec.seed, {0x53504C4954ULL});
  const auto order = shuffled(all, rng);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(spec.test_frac * static_cast<double>(n) + 1e-9));
  Split split;
  split.train.assign(order.begin(), order.begin() + static_cast<long>(n_train));
  split.test.assign(order.begin() + static_cast<long>(n_train), order.begin() + static_cast<long>(n_train + n_test));
  split.val.assign(order.begin() + static_cast<long>(n_train + n_test), order.end());
  return split;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                   Rng& rng, bool drop_last) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be at least 1");
  const auto order = shuffled(indices, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (drop_last && end - start < batch_size) break;
    batches.emplace_back(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
  }
  return batches;
}

Dataset load_dataset(const speckle::Manifest& manifest, std::size_t input_size,
                     const std::optional<std::filesystem::path>& cache_dir) {
  if (manifest.size() == 0) throw std::invalid_argument("load_dataset: empty manifest");
  if (cache_dir) std::filesystem::create_directories(*cache_dir);
  Dataset ds;
  ds.input_size = input_size;
  ds.samples.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    Sample s;
    s.label = manifest.rows[i].temperature_c;
    std::filesystem::path cached;
    if (cache_dir) {
      cached = *cache_dir / (std::filesystem::path(manifest.rows[i].filename).stem().string() + "_" +
                             std::to_string(input_size) + ".spkl");
    }
    if (cache_dir && std::filesystem::exists(cached)) {
      s.image = read_cache(cached);
    } else {
      s.image = preprocess(io::read_gray(manifest.path_of(i)), input_size);
      if (cache_dir) write_cache(cached, s.image);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Tensor stack_images(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("stack_images: empty batch");
  const Shape& s0 = samples.at(indices[0]).image.shape();
  Shape os{indices.size()};
  os.insert(os.end(), s0.begin(), s0.end());
  Tensor out(os);
  const std::size_t n = shape_numel(s0);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor& img = samples.at(indices[b]).image;
    if (img.shape() != s0) throw ShapeError("stack_images: inconsistent sample shapes");
    std::copy(img.ptr(), img.ptr() + n, out.ptr() + b * n);
  }
  return out;
}

Tensor stack_labels(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  Tensor out(Shape{indices.size(), 1});
  for (std::size_t b = 0; b < indices.size(); ++b) out[b] = samples.at(indices[b]).label;
  return out;
}

namespace {

template <class T>
void put_le(std::ofstream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "cache writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

void write_cache(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("write_cache expects H x W x C, got " + shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write cache " + path.string());
  out.write("SPKL", 4);
  put_le<std::uint16_t>(out, kCacheVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < h * w; ++i) put_le<double>(out, image[i * c + k]);
  if (!out) throw std::runtime_error("error writing cache " + path.string());
}

Tensor read_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cache " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPKL", 4) != 0) throw std::runtime_error(path.string() + ": not a SPKL cache file");
  const auto version = get_le<std::uint16_t>(in);
  const auto c = get_le<std::uint16_t>(in);
  const auto h = get_le<std::uint32_t>(in);
  const auto w = get_le<std::uint32_t>(in);
  if (!in || version != kCacheVersion || c == 0 || h == 0 || w == 0) {
    throw std::runtime_error(path.string() + ": unsupported cache header");
  }
  Tensor image(Shape{h, w, c});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < std::size_t{h} * w; ++i) image[i * c + k] = get_le<double>(in);
  if (!in) throw std::runtime_error(path.string() + ": truncated cache data");
  return image;
}

}  // namespace prionvit::pipeline
