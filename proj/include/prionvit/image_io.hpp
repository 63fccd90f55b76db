#pragma once

#include <filesystem>

#include "prionvit/specklegen.hpp"

namespace prionvit::io {

// 8-bit grayscale. The format follows the extension: .png or .pgm.
// Pixels are clamped to [0, 1] and rounded to the nearest level.
void write_gray8(const std::filesystem::path& path, const speckle::SpeckleImage& image);

// Loads 8/16-bit grayscale or RGB(A) PNG, or binary PGM, rescaled to [0, 1].
// Color input is reduced to luminance.
speckle::SpeckleImage read_gray(const std::filesystem::path& path);

}  // namespace prionvit::io
