#pragma once

// Synthetic multimode-fiber specklegrams. The intensity at temperature T is
//
//   I(x, y; T) = | sum_m a_m psi_m(x, y) exp(i (phi_m + kappa_m T)) |^2
//
// normalized to a maximum of 1, where psi_m are seeded band-limited random
// complex fields and kappa_m > 0 is the per-mode thermal phase sensitivity.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace prionvit::speckle {

struct ModeSetParams {
  std::size_t mode_count = 40;
  std::size_t width = 126;
  std::size_t height = 126;
  double kappa_min = 0.02;  // rad / degC
  double kappa_max = 0.20;
  // Gaussian correlation length of each mode pattern, in pixels. Sets the
  // speckle grain size.
  double grain_sigma_px = 2.5;
  // Zero the field outside an inscribed disc, like a fiber end face.
  bool circular_core = true;
  std::uint64_t seed = 0;
};

struct FiberModeSet {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::complex<double>> amplitude;
  std::vector<double> base_phase;
  std::vector<double> kappa;
  // Per-mode transverse field, row-major width*height, split re/im.
  std::vector<std::vector<double>> pattern_re;
  std::vector<std::vector<double>> pattern_im;

  std::size_t size() const { return kappa.size(); }
};

struct SpeckleImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, values in [0, 1]

  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  friend bool operator==(const SpeckleImage&, const SpeckleImage&) = default;
};

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

FiberModeSet make_mode_set(const ModeSetParams& params);

// Throws std::invalid_argument for an empty mode set or a non-finite temperature.
SpeckleImage render_specklegram(const FiberModeSet& modes, double temperature_c);

// Zero-mean normalized cross-correlation. Throws UndefinedCorrelation when
// either image has zero variance and ShapeError-like invalid_argument on a
// size mismatch.
double zncc(const SpeckleImage& a, const SpeckleImage& b);

struct ManifestRow {
  std::string filename;
  double temperature_c = 0.0;
};

struct Manifest {
  std::filesystem::path directory;
  std::vector<ManifestRow> rows;

  std::size_t size() const { return rows.size(); }
  std::filesystem::path path_of(std::size_t i) const { return directory / rows[i].filename; }
};

// Inclusive grid t_min, t_min + step, ... up to t_max (within 1e-9 steps).
std::vector<double> temperature_grid(double t_min, double t_max, double step);
std::string image_filename(double temperature_c);

// Renders one PNG per grid temperature into out_dir and writes manifest.csv.
Manifest generate_dataset(const FiberModeSet& modes, double t_min, double t_max, double step,
                          const std::filesystem::path& out_dir);

inline constexpr const char* kManifestName = "manifest.csv";

void write_manifest(const Manifest& manifest);
// Reads <directory>/manifest.csv.
Manifest read_manifest(const std::filesystem::path& directory);

}  // namespace prionvit::speckle
