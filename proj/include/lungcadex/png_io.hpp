#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lungcadex/image.hpp"

namespace lungcadex {

/// Reads an 8-bit PNG (grayscale, or colour reduced to its first channel) as a
/// binary mask: any non-zero sample is foreground.
Mask read_png_mask(const std::filesystem::path& path);

void write_png_gray(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& pixels);
void write_png_rgb(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& rgb);

}  // namespace lungcadex
