#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "amrt/tokenizer.hpp"

namespace amrt {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, top row first
};

// Heatmap of one channel of the painted tokens, each pixel blown up to
// `scale` x `scale`, with the boundaries of stored cells drawn in white.
// Row 0 of the field (y near 0) ends up at the bottom of the image.
Image render_tokens(const tokenizer::TokenSet& tokens, std::string_view channel,
                    std::size_t scale = 4);

// Binary PPM (P6).
void write_ppm(const Image& image, const std::filesystem::path& path);

}  // namespace amrt
