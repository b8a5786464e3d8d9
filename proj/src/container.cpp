#include <fstream>
#include <limits>

#include "amrt/error.hpp"
#include "amrt/grid.hpp"
#include "binary_io.hpp"

namespace amrt {

namespace {
constexpr char kMagic[5] = "AMRT";
constexpr std::uint32_t kVersion = 1;

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw ShapeError(std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(v);
}
}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto out = path;
  out += ".meta.json";
  return out;
}

void write_container(const FrameSequence& seq, std::ostream& out) {
  seq.validate();
  const std::size_t h = seq.frames.empty() ? 0 : seq.frames.front().height();
  const std::size_t w = seq.frames.empty() ? 0 : seq.frames.front().width();
  const std::vector<std::string> no_channels;
  const auto& channels = seq.frames.empty() ? no_channels : seq.frames.front().channels();

  io::put_magic(out, kMagic);
  io::put_u32(out, kVersion);
  io::put_u32(out, checked_u32(h, "height"));
  io::put_u32(out, checked_u32(w, "width"));
  io::put_u32(out, checked_u32(channels.size(), "channel count"));
  io::put_u32(out, checked_u32(seq.frames.size(), "frame count"));
  io::put_f64(out, seq.dt);
  for (const auto& name : channels) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw ShapeError("channel name too long");
    io::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  for (const auto& frame : seq.frames)
    for (double v : frame.data()) io::put_f32(out, static_cast<float>(v));
  if (!out) throw FormatError(FormatError::Kind::io, "failed writing container");
}

FrameSequence read_container(std::istream& in) {
  io::expect_magic(in, kMagic);
  io::expect_version(in, kVersion);
  const std::size_t h = io::get_u32(in, "height");
  const std::size_t w = io::get_u32(in, "width");
  const std::size_t c = io::get_u32(in, "channel count");
  const std::size_t n = io::get_u32(in, "frame count");

  FrameSequence seq;
  seq.dt = io::get_f64(in, "dt");
  std::vector<std::string> channels(c);
  for (auto& name : channels) {
    name.resize(io::get_u16(in, "channel name length"));
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size())))
      throw FormatError(FormatError::Kind::truncated, "truncated channel name");
  }
  seq.frames.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    std::vector<double> data(h * w * c);
    for (auto& v : data) {
      float x;
      if (!in.read(reinterpret_cast<char*>(&x), sizeof(float)))
        throw FormatError(FormatError::Kind::truncated,
                          "truncated payload: header declares " + std::to_string(n) +
                              " frames, data ends in frame " + std::to_string(f));
      if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&x);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
      v = x;
    }
    seq.frames.emplace_back(h, w, channels, std::move(data));
  }
  return seq;
}

void write_container(const FrameSequence& seq, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    write_container(seq, out);
  }
  nlohmann::json meta = {{"case_id", seq.case_id}, {"seed", seq.seed}, {"settings", seq.settings}};
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw FormatError(FormatError::Kind::io, "cannot open sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

FrameSequence read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  FrameSequence seq = read_container(in);
  std::ifstream side(sidecar_path(path));
  if (side) {
    try {
      const auto meta = nlohmann::json::parse(side);
      seq.case_id = meta.value("case_id", std::string{});
      seq.seed = meta.value("seed", std::uint64_t{0});
      seq.settings = meta.value("settings", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(FormatError::Kind::malformed,
                        "bad sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
  }
  return seq;
}

}  // namespace amrt
