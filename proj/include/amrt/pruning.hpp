#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "amrt/grid.hpp"

namespace amrt {

// Axis-aligned quadtree cell in pixel coordinates.
struct Region {
  std::size_t depth = 0;
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t area() const noexcept { return rows * cols; }
  // Mean of the contained cell centers on the unit square.
  std::pair<double, double> center(std::size_t height, std::size_t width) const noexcept {
    return {(static_cast<double>(col0) + 0.5 * static_cast<double>(cols)) /
                static_cast<double>(width),
            (static_cast<double>(row0) + 0.5 * static_cast<double>(rows)) /
                static_cast<double>(height)};
  }
  bool contains(const Region& other) const noexcept {
    return other.row0 >= row0 && other.col0 >= col0 && other.row0 + other.rows <= row0 + rows &&
           other.col0 + other.cols <= col0 + cols;
  }
  friend bool operator==(const Region&, const Region&) = default;
};

namespace pruning {

struct CellProps {
  double grad = 0.0;      // mean velocity-gradient magnitude G
  double vort = 0.0;      // mean signed vorticity omega
  double momentum = 0.0;  // |mean velocity| M
  double shear = 0.0;     // mean |du/dy - dv/dx| S
  friend bool operator==(const CellProps&, const CellProps&) = default;
};

struct GlobalRef {
  double grad = 0.0;
  double vort = 0.0;  // mean |omega|
  double momentum = 0.0;
  double shear = 0.0;
  friend bool operator==(const GlobalRef&, const GlobalRef&) = default;
};

struct Thresholds {
  double t_grad = 1.05;
  double t_vort = 2.1;
  double t_mom = 5.25;
  double t_kh = 2.1;
  double r_grad = 0.25;
  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double mid() const noexcept { return 0.5 * (lo + hi); }
  friend bool operator==(const Range&, const Range&) = default;
};

struct SamplingRanges {
  Range grad{0.1, 2.0};
  Range vort{0.2, 4.0};
  Range mom{0.5, 10.0};
  Range kh{0.2, 4.0};
  double r_grad = 0.25;
  friend bool operator==(const SamplingRanges&, const SamplingRanges&) = default;
};

// Midpoint of each sampling range.
Thresholds default_thresholds(const SamplingRanges& ranges = {});
// Upper end of each sampling range (least refinement).
Thresholds max_thresholds(const SamplingRanges& ranges = {});

Thresholds sample_thresholds(std::mt19937_64& rng, const SamplingRanges& ranges = {});

// Which clauses participate in the subdivision decision. The percentile rule
// belongs to the velocity-gradient criterion.
struct CriteriaMask {
  bool grad = true;
  bool vort = true;
  bool mom = true;
  bool kh = true;
  friend bool operator==(const CriteriaMask&, const CriteriaMask&) = default;
};

// Bit set of clauses that fired for one cell.
enum Clause : std::uint8_t {
  kClauseGrad = 1u << 0,
  kClauseVort = 1u << 1,
  kClauseMom = 1u << 2,
  kClauseKh = 1u << 3,
  kClausePercentile = 1u << 4,
};

// Pointwise quantities sampled on the pixel grid, from central differences
// of u and v.
struct FlowPlanes {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> grad;   // sqrt(ux^2 + uy^2 + vx^2 + vy^2)
  std::vector<double> vort;   // vx - uy
  std::vector<double> shear;  // |uy - vx|
  std::vector<double> u;
  std::vector<double> v;
};

// Throws ChannelError when u or v is missing.
FlowPlanes flow_planes(const Field& field);

CellProps cell_props(const FlowPlanes& planes, const Region& region);
CellProps cell_props(const Field& field, const Region& region);

GlobalRef global_ref(const FlowPlanes& planes);
GlobalRef global_ref(const Field& field);

// Properties of every cell of the regular n x n partition at `depth`
// (n = k^depth), row-major. Parallel over cell rows.
std::vector<CellProps> level_props(const FlowPlanes& planes, std::size_t k, std::size_t depth);

namespace serial {
std::vector<CellProps> level_props(const FlowPlanes& planes, std::size_t k, std::size_t depth);
}  // namespace serial

// Nearest-rank cut of the top r fraction: the ceil(r * n)-th largest value.
// Returns +infinity when r <= 0 (percentile rule disabled). Throws on empty input.
double top_fraction_cut(std::span<const double> values, double r);

// Fired clauses for one cell given a precomputed percentile cut.
std::uint8_t fired_clauses(const CellProps& props, const GlobalRef& ref, const Thresholds& thr,
                           double grad_cut, const CriteriaMask& mask = {});

// True iff any threshold clause or the Top-r_grad percentile clause fires.
// `level_grad_values` are the G values the percentile is taken over.
bool should_subdivide(const CellProps& props, const GlobalRef& ref, const Thresholds& thr,
                      std::span<const double> level_grad_values, const CriteriaMask& mask = {});

nlohmann::json to_json(const Thresholds& thr);
// Reads t_grad, t_vort, t_mom, t_kh, r_grad from `j` (missing keys keep `base`).
Thresholds thresholds_from_json(const nlohmann::json& j, Thresholds base = {});

}  // namespace pruning
}  // namespace amrt
