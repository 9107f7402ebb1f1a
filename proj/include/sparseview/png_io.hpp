#pragma once

#include <string>

#include "sparseview/image.hpp"

namespace sparseview {

/// Reads any 8/16-bit PNG as RGB in [0, 1].
Image read_png(const std::string &path);

/// Writes a 1- or 3-channel image as 8-bit PNG (values clamped to [0, 1] and
/// rounded to the nearest level).
void write_png(const std::string &path, const Image &image);

/// Raw little-endian float32 dump, channel planes one after another.
void write_float_planar(const std::string &path, const Image &image);
Image read_float_planar(const std::string &path, int width, int height, int channels);

}  // namespace sparseview
