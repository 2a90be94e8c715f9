#pragma once

#include <string>

#include "core/image.hpp"

namespace vf {

// Reads an 8/16-bit PNG (gray, palette, RGB or RGBA); alpha is composited
// over the given background colour.
Image read_png(const std::string& path, const Rgb& background);

// Writes 8-bit RGB.
void write_png(const std::string& path, const Image& img);

}  // namespace vf
