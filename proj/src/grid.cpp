#include "amrt/grid.hpp"

#include <algorithm>
#include <set>

#include "amrt/error.hpp"

namespace amrt {

namespace {

void check_channels(const std::vector<std::string>& channels) {
  std::set<std::string> seen;
  for (const auto& name : channels) {
    if (name.empty()) throw ShapeError("channel names must be nonempty");
    if (!seen.insert(name).second) throw ShapeError("duplicate channel '" + name + "'");
  }
}

// One row of derivative values; shared by the serial and parallel paths so
// both produce identical bits.
inline void gradient_row(const Plane& p, std::size_t i, double inv_hx, double inv_hy,
                         Gradient& g) {
  const std::size_t h = p.height;
  const std::size_t w = p.width;
  for (std::size_t j = 0; j < w; ++j) {
    double dx;
    if (j == 0) {
      dx = (p.at(i, 1) - p.at(i, 0)) * inv_hx;
    } else if (j == w - 1) {
      dx = (p.at(i, w - 1) - p.at(i, w - 2)) * inv_hx;
    } else {
      dx = (p.at(i, j + 1) - p.at(i, j - 1)) * (0.5 * inv_hx);
    }
    double dy;
    if (i == 0) {
      dy = (p.at(1, j) - p.at(0, j)) * inv_hy;
    } else if (i == h - 1) {
      dy = (p.at(h - 1, j) - p.at(h - 2, j)) * inv_hy;
    } else {
      dy = (p.at(i + 1, j) - p.at(i - 1, j)) * (0.5 * inv_hy);
    }
    g.ddx.at(i, j) = dx;
    g.ddy.at(i, j) = dy;
  }
}

void check_gradient_shape(const Plane& plane) {
  if (plane.height < 2 || plane.width < 2)
    throw ShapeError("central_gradient needs at least 2x2 cells");
}

}  // namespace

Field::Field(std::size_t height, std::size_t width, std::vector<std::string> channels)
    : height_(height),
      width_(width),
      channels_(std::move(channels)),
      data_(height * width * channels_.size(), 0.0) {
  check_channels(channels_);
}

Field::Field(std::size_t height, std::size_t width, std::vector<std::string> channels,
             std::vector<double> data)
    : height_(height), width_(width), channels_(std::move(channels)), data_(std::move(data)) {
  check_channels(channels_);
  if (data_.size() != height_ * width_ * channels_.size())
    throw ShapeError("field data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(height_) + "x" +
                     std::to_string(width_) + "x" + std::to_string(channels_.size()));
}

bool Field::has_channel(std::string_view name) const noexcept {
  return std::find(channels_.begin(), channels_.end(), name) != channels_.end();
}

std::size_t Field::channel_index(std::string_view name) const {
  auto it = std::find(channels_.begin(), channels_.end(), name);
  if (it == channels_.end()) throw ChannelError(std::string(name));
  return static_cast<std::size_t>(it - channels_.begin());
}

Plane Field::channel(std::string_view name) const {
  const std::size_t c = channel_index(name);
  Plane out(height_, width_);
  const std::size_t nc = channels_.size();
  for (std::size_t n = 0; n < height_ * width_; ++n) out.values[n] = data_[n * nc + c];
  return out;
}

void FrameSequence::validate() const {
  if (dt < 0.0) throw ShapeError("frame spacing dt must be nonnegative");
  for (const auto& f : frames) {
    if (!f.same_layout(frames.front()))
      throw ShapeError("frames of a sequence must share shape and channels");
  }
}

Gradient central_gradient(const Plane& plane) {
  check_gradient_shape(plane);
  Gradient g{Plane(plane.height, plane.width), Plane(plane.height, plane.width)};
  const double inv_hx = static_cast<double>(plane.width);
  const double inv_hy = static_cast<double>(plane.height);
  const auto rows = static_cast<std::ptrdiff_t>(plane.height);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gradient_row(plane, static_cast<std::size_t>(i), inv_hx, inv_hy, g);
  return g;
}

Gradient serial::central_gradient(const Plane& plane) {
  check_gradient_shape(plane);
  Gradient g{Plane(plane.height, plane.width), Plane(plane.height, plane.width)};
  const double inv_hx = static_cast<double>(plane.width);
  const double inv_hy = static_cast<double>(plane.height);
  for (std::size_t i = 0; i < plane.height; ++i) gradient_row(plane, i, inv_hx, inv_hy, g);
  return g;
}

Gradient central_gradient(const Field& field, std::string_view channel) {
  return central_gradient(field.channel(channel));
}

Field downsample_mean(const Field& field, std::size_t factor) {
  if (factor == 0 || field.height() % factor != 0 || field.width() % factor != 0)
    throw ShapeError("downsample factor " + std::to_string(factor) + " does not divide " +
                     std::to_string(field.height()) + "x" + std::to_string(field.width()));
  const std::size_t h = field.height() / factor;
  const std::size_t w = field.width() / factor;
  const std::size_t nc = field.channel_count();
  Field out(h, w, field.channels());
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t c = 0; c < nc; ++c) {
        double sum = 0.0;
        for (std::size_t a = 0; a < factor; ++a)
          for (std::size_t b = 0; b < factor; ++b)
            sum += field.at(i * factor + a, j * factor + b, c);
        out.at(i, j, c) = factor == 1 ? sum : sum * inv;
      }
    }
  }
  return out;
}

}  // namespace amrt
