#include "amrt/checkpoint.hpp"

#include <fstream>
#include <limits>
#include <string>

#include "amrt/error.hpp"
#include "binary_io.hpp"

namespace amrt::solver {

namespace {
constexpr char kMagic[5] = "APRM";
constexpr std::uint32_t kVersion = 1;
// Tensors are stored as matrices; 1 x n biases keep rank 2.
constexpr std::uint32_t kRank = 2;
}  // namespace

void write_params(const SolverParams& params, std::ostream& out) {
  io::put_magic(out, kMagic);
  io::put_u32(out, kVersion);
  const std::string cfg = to_json(params.cfg).dump();
  io::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  params.for_each([&](const Matrix& m) {
    if (m.rows > std::numeric_limits<std::uint32_t>::max() ||
        m.cols > std::numeric_limits<std::uint32_t>::max())
      throw ShapeError("tensor dimension exceeds u32 range");
    io::put_u32(out, kRank);
    io::put_u32(out, static_cast<std::uint32_t>(m.rows));
    io::put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.values) io::put_f64(out, v);
  });
  if (!out) throw FormatError(FormatError::Kind::io, "failed writing parameters");
}

SolverParams read_params(std::istream& in) {
  io::expect_magic(in, kMagic);
  io::expect_version(in, kVersion);
  const std::uint32_t len = io::get_u32(in, "config length");
  std::string text(len, '\0');
  if (!in.read(text.data(), len))
    throw FormatError(FormatError::Kind::truncated, "truncated solver config block");
  SolverConfig cfg;
  try {
    cfg = solver_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatError::Kind::malformed, std::string("bad solver config: ") + e.what());
  }
  SolverParams params = zero_params(cfg);
  std::size_t index = 0;
  params.for_each([&](Matrix& m) {
    const std::uint32_t rank = io::get_u32(in, "tensor rank");
    if (rank != kRank)
      throw FormatError(FormatError::Kind::malformed,
                        "tensor " + std::to_string(index) + " has rank " + std::to_string(rank));
    const std::size_t rows = io::get_u32(in, "tensor dims");
    const std::size_t cols = io::get_u32(in, "tensor dims");
    if (rows != m.rows || cols != m.cols)
      throw FormatError(FormatError::Kind::malformed,
                        "tensor " + std::to_string(index) + " is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", config implies " + std::to_string(m.rows) +
                            "x" + std::to_string(m.cols));
    for (auto& v : m.values) v = io::get_f64(in, "tensor values");
    ++index;
  });
  return params;
}

void write_params(const SolverParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  write_params(params, out);
}

SolverParams read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
  return read_params(in);
}

}  // namespace amrt::solver
