#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace amrt::posenc {

struct Position {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
};

// Widths of the x, y and depth parts of a d_model-wide encoding:
// x and y get floor(d_model / 3) rounded down to even, depth the rest.
struct Split {
  std::size_t dx = 0;
  std::size_t dy = 0;
  std::size_t dd = 0;
};

// Throws ConfigError for d_model < 6.
Split split_for(std::size_t d_model);

// Row-major N x d_model matrix. Each part holds interleaved
// (sin(coord * f_j), cos(coord * f_j)) pairs with f_j = exp(-ln(10000) * 2j / width);
// an odd-width part ends with a lone sine slot.
std::vector<double> encode_positions(std::span<const Position> positions, std::size_t d_model);

}  // namespace amrt::posenc
