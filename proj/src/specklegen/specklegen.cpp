#include "prionvit/specklegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "prionvit/image_io.hpp"
#include "prionvit/kernels.hpp"
#include "prionvit/rng.hpp"

namespace prionvit::speckle {

namespace {

std::vector<double> gaussian_taps(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    taps[i + radius] = w;
    total += w;
  }
  for (double& w : taps) w /= total;
  return taps;
}

// Separable blur with periodic boundaries.
void blur(std::vector<double>& field, std::size_t w, std::size_t h, const std::vector<double>& taps) {
  const long radius = static_cast<long>(taps.size() / 2);
  std::vector<double> tmp(field.size(), 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        const long cc = ((static_cast<long>(c) + k) % static_cast<long>(w) + static_cast<long>(w)) % static_cast<long>(w);
        s += taps[k + radius] * field[r * w + cc];
      }
      tmp[r * w + c] = s;
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        const long rr = ((static_cast<long>(r) + k) % static_cast<long>(h) + static_cast<long>(h)) % static_cast<long>(h);
        s += taps[k + radius] * tmp[rr * w + c];
      }
      field[r * w + c] = s;
    }
  }
}

std::string format_temperature(double t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", t);
  // Avoid "-0.0" for values that round to zero.
  if (std::string(buf) == "-0.0") return "0.0";
  return buf;
}

}  // namespace

FiberModeSet make_mode_set(const ModeSetParams& params) {
  if (params.width == 0 || params.height == 0) throw std::invalid_argument("mode set size must be positive");
  if (!(params.kappa_min > 0.0) || !(params.kappa_max >= params.kappa_min)) {
    throw std::invalid_argument("kappa range must satisfy 0 < kappa_min <= kappa_max");
  }
  if (!(params.grain_sigma_px > 0.0)) throw std::invalid_argument("grain_sigma_px must be positive");

  FiberModeSet modes;
  modes.width = params.width;
  modes.height = params.height;
  const std::size_t npix = params.width * params.height;
  const auto taps = gaussian_taps(params.grain_sigma_px);
  const double cx = 0.5 * (static_cast<double>(params.width) - 1.0);
  const double cy = 0.5 * (static_cast<double>(params.height) - 1.0);
  const double radius = 0.5 * static_cast<double>(std::min(params.width, params.height));

  for (std::size_t m = 0; m < params.mode_count; ++m) {
    Rng rng = Rng::derive(params.seed, {0x4D4F4445ULL, m});
    const double amp_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    modes.amplitude.push_back(std::polar(1.0, amp_phase));
    modes.base_phase.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
    modes.kappa.push_back(rng.uniform(params.kappa_min, params.kappa_max));

    std::vector<double> re(npix), im(npix);
    for (std::size_t i = 0; i < npix; ++i) {
      re[i] = rng.normal();
      im[i] = rng.normal();
    }
    blur(re, params.width, params.height, taps);
    blur(im, params.width, params.height, taps);
    double power = 0.0;
    for (std::size_t i = 0; i < npix; ++i) power += re[i] * re[i] + im[i] * im[i];
    const double norm = power > 0.0 ? 1.0 / std::sqrt(power / static_cast<double>(npix)) : 1.0;
    for (std::size_t r = 0; r < params.height; ++r) {
      for (std::size_t c = 0; c < params.width; ++c) {
        const std::size_t i = r * params.width + c;
        double gain = norm;
        if (params.circular_core && std::hypot(c - cx, r - cy) > radius) gain = 0.0;
        re[i] *= gain;
        im[i] *= gain;
      }
    }
    modes.pattern_re.push_back(std::move(re));
    modes.pattern_im.push_back(std::move(im));
  }
  return modes;
}

SpeckleImage render_specklegram(const FiberModeSet& modes, double temperature_c) {
  if (modes.size() == 0) throw std::invalid_argument("render_specklegram: empty mode set");
  if (!std::isfinite(temperature_c)) throw std::invalid_argument("render_specklegram: temperature must be finite");
  const std::size_t npix = modes.width * modes.height;
  std::vector<double> field_re(npix, 0.0), field_im(npix, 0.0);
  const auto& kt = kernels::active();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const std::complex<double> c = modes.amplitude[m] * std::polar(1.0, modes.base_phase[m] + modes.kappa[m] * temperature_c);
    kt.complex_axpy(npix, c.real(), c.imag(), modes.pattern_re[m].data(), modes.pattern_im[m].data(), field_re.data(),
                    field_im.data());
  }
  SpeckleImage img{modes.width, modes.height, std::vector<double>(npix)};
  double peak = 0.0;
  for (std::size_t i = 0; i < npix; ++i) {
    img.pixels[i] = field_re[i] * field_re[i] + field_im[i] * field_im[i];
    peak = std::max(peak, img.pixels[i]);
  }
  if (peak > 0.0) {
    for (double& v : img.pixels) v /= peak;
  }
  return img;
}

double zncc(const SpeckleImage& a, const SpeckleImage& b) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size()) {
    throw std::invalid_argument("zncc: image sizes differ");
  }
  const std::size_t n = a.pixels.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.pixels[i];
    mb += b.pixels[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.pixels[i] - ma;
    const double db = b.pixels[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedCorrelation("zncc: zero-variance image, correlation undefined");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> temperature_grid(double t_min, double t_max, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("temperature step must be positive");
  if (!(t_min < t_max)) throw std::invalid_argument("t_min must be less than t_max");
  const auto count = static_cast<std::size_t>(std::floor((t_max - t_min) / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) grid[i] = t_min + static_cast<double>(i) * step;
  return grid;
}

std::string image_filename(double temperature_c) {
  const long long milli = std::llround(temperature_c * 1000.0);
  char buf[64];
  if (milli < 0) {
    std::snprintf(buf, sizeof buf, "speckle_T-%06lld.png", -milli);
  } else {
    std::snprintf(buf, sizeof buf, "speckle_T%06lld.png", milli);
  }
  return buf;
}

Manifest generate_dataset(const FiberModeSet& modes, double t_min, double t_max, double step,
                          const std::filesystem::path& out_dir) {
  const auto grid = temperature_grid(t_min, t_max, step);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw std::runtime_error("cannot create output directory " + out_dir.string());
  }
  Manifest manifest{out_dir, {}};
  for (double t : grid) {
    const std::string name = image_filename(t);
    io::write_gray8(out_dir / name, render_specklegram(modes, t));
    manifest.rows.push_back({name, t});
  }
  write_manifest(manifest);
  return manifest;
}

void write_manifest(const Manifest& manifest) {
  const auto path = manifest.directory / kManifestName;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "filename,temperature_c\n";
  for (const auto& row : manifest.rows) out << row.filename << ',' << format_temperature(row.temperature_c) << '\n';
  if (!out) throw std::runtime_error("error writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& directory) {
  const auto path = directory / kManifestName;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "filename,temperature_c") {
    throw std::runtime_error("manifest " + path.string() + " has unexpected header '" + line + "'");
  }
  Manifest manifest{directory, {}};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected 'filename,temperature_c'");
    }
    ManifestRow row;
    row.filename = line.substr(0, comma);
    try {
      std::size_t used = 0;
      const std::string field = line.substr(comma + 1);
      row.temperature_c = std::stod(field, &used);
      if (used != field.size() || !std::isfinite(row.temperature_c)) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": bad temperature");
    }
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

}  // namespace prionvit::speckle
