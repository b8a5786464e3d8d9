#include <cmath>
#include <fstream>
#include <limits>

#include "amrt/error.hpp"
#include "amrt/tokenizer.hpp"
#include "binary_io.hpp"

namespace amrt::tokenizer {

namespace {
constexpr char kMagic[5] = "ATOK";
constexpr std::uint32_t kVersion = 1;

std::uint32_t u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max())
    throw ShapeError(std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(v);
}
}  // namespace

void write_tokens(const TokenSet& tokens, std::ostream& out) {
  const std::size_t kk = tokens.cells_per_token();
  const std::size_t nc = tokens.channels.size();
  io::put_magic(out, kMagic);
  io::put_u32(out, kVersion);
  io::put_u32(out, u32(tokens.tokens.size(), "token count"));
  io::put_u32(out, u32(kk, "cells per token"));
  io::put_u32(out, u32(nc, "channel count"));
  io::put_u8(out, static_cast<std::uint8_t>(tokens.mode));
  for (const auto& t : tokens.tokens) {
    if (t.parent_depth > 255) throw ShapeError("parent depth exceeds u8 range");
    io::put_u8(out, static_cast<std::uint8_t>(t.parent_depth));
    io::put_u32(out, u32(t.parent_row0, "parent row"));
    io::put_u32(out, u32(t.parent_col0, "parent col"));
    for (std::size_t s = 0; s < kk; ++s) {
      const auto& c = t.cells[s];
      io::put_u8(out, t.valid[s]);
      io::put_f32(out, static_cast<float>(c.cx));
      io::put_f32(out, static_cast<float>(c.cy));
      for (double f : c.features) io::put_f32(out, static_cast<float>(f));
    }
  }
  if (!out) throw FormatError(FormatError::Kind::io, "failed writing tokens");
}

TokenSet read_tokens(std::istream& in, std::size_t height, std::size_t width,
                     std::vector<std::string> channels) {
  io::expect_magic(in, kMagic);
  io::expect_version(in, kVersion);
  const std::size_t n = io::get_u32(in, "token count");
  const std::size_t kk = io::get_u32(in, "cells per token");
  const std::size_t nc = io::get_u32(in, "channel count");
  const auto mode = io::get_u8(in, "mode");
  if (mode > 1) throw FormatError(FormatError::Kind::malformed, "unknown token mode");
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(kk))));
  if (k * k != kk || k < 2)
    throw FormatError(FormatError::Kind::malformed, "cells per token is not a square");
  if (nc != channels.size())
    throw FormatError(FormatError::Kind::malformed, "channel count disagrees with metadata");

  TokenSet out;
  out.height = height;
  out.width = width;
  out.k = k;
  out.mode = static_cast<Mode>(mode);
  out.channels = std::move(channels);
  out.tokens.resize(n);
  for (auto& t : out.tokens) {
    t.parent_depth = io::get_u8(in, "parent depth");
    t.parent_row0 = io::get_u32(in, "parent row");
    t.parent_col0 = io::get_u32(in, "parent col");
    t.cells.resize(kk);
    t.valid.resize(kk);
    for (std::size_t s = 0; s < kk; ++s) {
      auto& c = t.cells[s];
      t.valid[s] = io::get_u8(in, "valid flag");
      c.depth = t.parent_depth + 1;
      c.cx = io::get_f32(in, "cell center");
      c.cy = io::get_f32(in, "cell center");
      c.features.resize(nc);
      for (auto& f : c.features) f = io::get_f32(in, "features");
    }
  }
  return out;
}

void write_tokens(const TokenSet& tokens, const std::filesystem::path& path,
                  const nlohmann::json& extra_meta) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    write_tokens(tokens, out);
  }
  nlohmann::json meta = extra_meta;
  meta["height"] = tokens.height;
  meta["width"] = tokens.width;
  meta["k"] = tokens.k;
  meta["channels"] = tokens.channels;
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw FormatError(FormatError::Kind::io, "cannot open sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

TokenSet read_tokens(const std::filesystem::path& path) {
  std::ifstream side(sidecar_path(path));
  if (!side)
    throw FormatError(FormatError::Kind::io, "missing sidecar " + sidecar_path(path).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(side);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::malformed, std::string("bad token sidecar: ") + e.what());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  TokenSet t = read_tokens(in, meta.at("height").get<std::size_t>(),
                           meta.at("width").get<std::size_t>(),
                           meta.at("channels").get<std::vector<std::string>>());
  if (t.k != meta.value("k", t.k))
    throw FormatError(FormatError::Kind::malformed, "k in sidecar disagrees with token file");
  return t;
}

}  // namespace amrt::tokenizer
