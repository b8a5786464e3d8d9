#include "amrt/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "amrt/error.hpp"

namespace amrt {

namespace {

// Viridis sampled at nine evenly spaced stops.
constexpr std::array<std::array<double, 3>, 9> kStops{{
    {68, 1, 84},
    {71, 44, 122},
    {59, 81, 139},
    {44, 113, 142},
    {33, 144, 141},
    {39, 173, 129},
    {92, 200, 99},
    {170, 220, 50},
    {253, 231, 37},
}};

std::array<std::uint8_t, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(kStops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), kStops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(
        std::lround(kStops[i][c] + f * (kStops[i + 1][c] - kStops[i][c])));
  return out;
}

}  // namespace

Image render_tokens(const tokenizer::TokenSet& tokens, std::string_view channel,
                    std::size_t scale) {
  if (scale == 0) throw ConfigError("render scale must be positive");
  const Field field = tokenizer::detokenize(tokens, 0.0);
  const std::size_t ch = field.channel_index(channel);
  const std::size_t H = field.height(), W = field.width();

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double v = field.at(i, j, ch);
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
  const double span = hi > lo ? hi - lo : 1.0;

  Image img;
  img.width = W * scale;
  img.height = H * scale;
  img.rgb.resize(img.width * img.height * 3);
  auto put = [&](std::size_t px, std::size_t py, std::array<std::uint8_t, 3> c) {
    std::copy(c.begin(), c.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>((py * img.width + px) * 3));
  };
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const auto c = colormap((field.at(i, j, ch) - lo) / span);
      for (std::size_t a = 0; a < scale; ++a)
        for (std::size_t b = 0; b < scale; ++b) put(j * scale + b, (H - 1 - i) * scale + a, c);
    }

  const std::array<std::uint8_t, 3> white{255, 255, 255};
  for (const auto& t : tokens.tokens) {
    for (std::size_t s = 0; s < tokens.cells_per_token(); ++s) {
      if (!t.valid[s]) continue;
      const Region r = t.cell_region(s, H, W, tokens.k);
      const std::size_t x0 = r.col0 * scale, x1 = (r.col0 + r.cols) * scale - 1;
      const std::size_t y0 = (H - r.row0 - r.rows) * scale, y1 = (H - r.row0) * scale - 1;
      for (std::size_t x = x0; x <= x1; ++x) {
        put(x, y0, white);
        put(x, y1, white);
      }
      for (std::size_t y = y0; y <= y1; ++y) {
        put(x0, y, white);
        put(x1, y, white);
      }
    }
  }
  return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "failed writing " + path.string());
}

}  // namespace amrt
