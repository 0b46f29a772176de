#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fisheyehdk/tensor.hpp"

namespace fhdk {

/// Reads an 8-bit PNG as [C, H, W] in [0, 1]; gray stays 1 channel,
/// everything else is converted to RGB.
Tensor read_png_image(const std::string& path);
/// Writes [C, H, W] (C = 1 or 3) clamped to [0, 1] as 8-bit PNG.
void write_png_image(const std::string& path, const Tensor& pixels);

/// Single-channel 8-bit label map.
std::vector<std::uint8_t> read_png_labels(const std::string& path, int& height, int& width);
void write_png_labels(const std::string& path, const std::vector<std::uint8_t>& labels,
                      int height, int width);

/// 1-bit grayscale PNG, nonzero = white.
void write_png_mask(const std::string& path, const std::vector<std::uint8_t>& mask, int height,
                    int width);
std::vector<std::uint8_t> read_png_mask(const std::string& path, int& height, int& width);

}  // namespace fhdk
