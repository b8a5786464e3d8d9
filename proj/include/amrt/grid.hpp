#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace amrt {

// Single-channel H x W scalar plane, row-major.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), values(h * w, fill) {}

  double& at(std::size_t i, std::size_t j) { return values[i * width + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * width + j]; }
};

// Dense structured grid of physical channels. Row i spans y in
// [i/H, (i+1)/H), column j spans x in [j/W, (j+1)/W) on the unit square.
// Storage is row-major, channel-minor.
class Field {
 public:
  Field() = default;
  Field(std::size_t height, std::size_t width, std::vector<std::string> channels);
  Field(std::size_t height, std::size_t width, std::vector<std::string> channels,
        std::vector<double> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channel_count() const noexcept { return channels_.size(); }
  std::size_t cell_count() const noexcept { return height_ * width_; }
  const std::vector<std::string>& channels() const noexcept { return channels_; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return data_[(i * width_ + j) * channels_.size() + c];
  }
  double& at(std::size_t i, std::size_t j, std::size_t c) {
    return data_[(i * width_ + j) * channels_.size() + c];
  }

  bool has_channel(std::string_view name) const noexcept;
  // Throws ChannelError for an unknown name.
  std::size_t channel_index(std::string_view name) const;
  Plane channel(std::string_view name) const;

  bool same_layout(const Field& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::string> channels_;
  std::vector<double> data_;
};

// Center of cell (i, j) on the unit square: ((j + 0.5) / W, (i + 0.5) / H).
inline std::pair<double, double> cell_center(std::size_t i, std::size_t j,
                                             std::size_t height, std::size_t width) {
  return {(static_cast<double>(j) + 0.5) / static_cast<double>(width),
          (static_cast<double>(i) + 0.5) / static_cast<double>(height)};
}

struct FrameSequence {
  std::vector<Field> frames;
  double dt = 0.0;
  std::string case_id;
  std::uint64_t seed = 0;
  // Free-form generator settings, persisted in the JSON sidecar.
  nlohmann::json settings = nlohmann::json::object();

  // Throws ShapeError when frames disagree in layout or dt is negative.
  void validate() const;

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;
};

struct Gradient {
  Plane ddx;
  Plane ddy;
};

// Second-order central differences in the interior, first-order one-sided
// differences on the boundary rows/columns. Spacing is 1/W along x and 1/H
// along y. Requires H, W >= 2.
Gradient central_gradient(const Plane& plane);
Gradient central_gradient(const Field& field, std::string_view channel);

// Block average by `factor` in both directions.
Field downsample_mean(const Field& field, std::size_t factor);

namespace serial {
Gradient central_gradient(const Plane& plane);
}  // namespace serial

// `.nsgrid` container I/O. Payload values are stored as f32, so a roundtrip
// returns the doubles obtained by rounding each input value to float.
void write_container(const FrameSequence& seq, std::ostream& out);
FrameSequence read_container(std::istream& in);

// Path overloads additionally write/read the `<file>.meta.json` sidecar
// holding case_id, seed and settings.
void write_container(const FrameSequence& seq, const std::filesystem::path& path);
FrameSequence read_container(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace amrt
