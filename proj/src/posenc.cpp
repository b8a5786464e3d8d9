#include "amrt/posenc.hpp"

#include <cmath>

#include "amrt/error.hpp"

namespace amrt::posenc {

namespace {

void encode_part(double coord, std::size_t width, double* out) {
  const double log_base = std::log(10000.0);
  for (std::size_t j = 0; 2 * j < width; ++j) {
    const double freq =
        std::exp(-log_base * static_cast<double>(2 * j) / static_cast<double>(width));
    out[2 * j] = std::sin(coord * freq);
    if (2 * j + 1 < width) out[2 * j + 1] = std::cos(coord * freq);
  }
}

}  // namespace

Split split_for(std::size_t d_model) {
  if (d_model < 6) throw ConfigError("positional encoding needs d_model >= 6");
  std::size_t part = d_model / 3;
  part -= part % 2;
  return {part, part, d_model - 2 * part};
}

std::vector<double> encode_positions(std::span<const Position> positions, std::size_t d_model) {
  const Split s = split_for(d_model);
  std::vector<double> out(positions.size() * d_model);
  for (std::size_t n = 0; n < positions.size(); ++n) {
    double* row = out.data() + n * d_model;
    encode_part(positions[n].x, s.dx, row);
    encode_part(positions[n].y, s.dy, row + s.dx);
    encode_part(positions[n].depth, s.dd, row + s.dx + s.dy);
  }
  return out;
}

}  // namespace amrt::posenc
