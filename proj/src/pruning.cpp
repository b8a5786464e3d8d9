#include "amrt/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "amrt/error.hpp"
#include "amrt/random.hpp"

namespace amrt::pruning {

namespace {

// Row-major accumulation over the region; the only summation order used for
// cell properties, so standalone and per-level evaluation agree bitwise.
CellProps region_props_unchecked(const FlowPlanes& p, std::size_t row0, std::size_t col0,
                                 std::size_t rows, std::size_t cols) {
  double g = 0.0, w = 0.0, s = 0.0, u = 0.0, v = 0.0;
  for (std::size_t i = row0; i < row0 + rows; ++i) {
    const std::size_t base = i * p.width;
    for (std::size_t j = col0; j < col0 + cols; ++j) {
      g += p.grad[base + j];
      w += p.vort[base + j];
      s += p.shear[base + j];
      u += p.u[base + j];
      v += p.v[base + j];
    }
  }
  const double n = static_cast<double>(rows * cols);
  const double mu = u / n;
  const double mv = v / n;
  return {g / n, w / n, std::sqrt(mu * mu + mv * mv), s / n};
}

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

std::vector<CellProps> level_props_impl(const FlowPlanes& planes, std::size_t k,
                                        std::size_t depth, bool parallel) {
  const std::size_t n = ipow(k, depth);
  if (n == 0 || planes.height % n != 0 || planes.width % n != 0)
    throw ShapeError("depth " + std::to_string(depth) + " does not tile the grid");
  const std::size_t rows = planes.height / n;
  const std::size_t cols = planes.width / n;
  std::vector<CellProps> out(n * n);
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t a = 0; a < nn; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    for (std::size_t b = 0; b < n; ++b)
      out[ua * n + b] = region_props_unchecked(planes, ua * rows, b * cols, rows, cols);
  }
  return out;
}

}  // namespace

Thresholds default_thresholds(const SamplingRanges& r) {
  return {r.grad.mid(), r.vort.mid(), r.mom.mid(), r.kh.mid(), r.r_grad};
}

Thresholds max_thresholds(const SamplingRanges& r) {
  return {r.grad.hi, r.vort.hi, r.mom.hi, r.kh.hi, r.r_grad};
}

Thresholds sample_thresholds(std::mt19937_64& rng, const SamplingRanges& r) {
  Thresholds t;
  t.t_grad = uniform(rng, r.grad.lo, r.grad.hi);
  t.t_vort = uniform(rng, r.vort.lo, r.vort.hi);
  t.t_mom = uniform(rng, r.mom.lo, r.mom.hi);
  t.t_kh = uniform(rng, r.kh.lo, r.kh.hi);
  t.r_grad = r.r_grad;
  return t;
}

FlowPlanes flow_planes(const Field& field) {
  const Plane u = field.channel("u");
  const Plane v = field.channel("v");
  const Gradient gu = central_gradient(u);
  const Gradient gv = central_gradient(v);
  const std::size_t n = field.cell_count();
  FlowPlanes p{field.height(), field.width(), std::vector<double>(n), std::vector<double>(n),
               std::vector<double>(n), u.values, v.values};
  for (std::size_t c = 0; c < n; ++c) {
    const double ux = gu.ddx.values[c], uy = gu.ddy.values[c];
    const double vx = gv.ddx.values[c], vy = gv.ddy.values[c];
    p.grad[c] = std::sqrt(ux * ux + uy * uy + vx * vx + vy * vy);
    p.vort[c] = vx - uy;
    p.shear[c] = std::abs(uy - vx);
  }
  return p;
}

CellProps cell_props(const FlowPlanes& planes, const Region& r) {
  if (r.rows == 0 || r.cols == 0 || r.row0 + r.rows > planes.height ||
      r.col0 + r.cols > planes.width)
    throw ShapeError("region outside field bounds");
  return region_props_unchecked(planes, r.row0, r.col0, r.rows, r.cols);
}

CellProps cell_props(const Field& field, const Region& region) {
  return cell_props(flow_planes(field), region);
}

GlobalRef global_ref(const FlowPlanes& p) {
  const std::size_t n = p.height * p.width;
  double g = 0.0, w = 0.0, m = 0.0, s = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    g += p.grad[c];
    w += std::abs(p.vort[c]);
    m += std::sqrt(p.u[c] * p.u[c] + p.v[c] * p.v[c]);
    s += p.shear[c];
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {g * inv, w * inv, m * inv, s * inv};
}

GlobalRef global_ref(const Field& field) { return global_ref(flow_planes(field)); }

std::vector<CellProps> level_props(const FlowPlanes& planes, std::size_t k, std::size_t depth) {
  return level_props_impl(planes, k, depth, true);
}

std::vector<CellProps> serial::level_props(const FlowPlanes& planes, std::size_t k,
                                           std::size_t depth) {
  return level_props_impl(planes, k, depth, false);
}

double top_fraction_cut(std::span<const double> values, double r) {
  if (values.empty()) throw Error("percentile rule needs at least one level value");
  if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
  const std::size_t n = values.size();
  // 1e-12 guards against r*n landing a hair above an integer.
  auto rank = static_cast<std::size_t>(std::ceil(r * static_cast<double>(n) * (1.0 - 1e-12)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::vector<double> sorted(values.begin(), values.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   sorted.end(), std::greater<>());
  return sorted[rank - 1];
}

std::uint8_t fired_clauses(const CellProps& c, const GlobalRef& g, const Thresholds& t,
                           double grad_cut, const CriteriaMask& mask) {
  std::uint8_t fired = 0;
  if (mask.grad && c.grad > g.grad * t.t_grad) fired |= kClauseGrad;
  if (mask.vort && std::abs(c.vort) > g.vort * t.t_vort) fired |= kClauseVort;
  if (mask.mom && c.momentum > g.momentum * t.t_mom) fired |= kClauseMom;
  if (mask.kh && c.shear > g.shear * t.t_kh) fired |= kClauseKh;
  if (mask.grad && c.grad >= grad_cut) fired |= kClausePercentile;
  return fired;
}

bool should_subdivide(const CellProps& props, const GlobalRef& ref, const Thresholds& thr,
                      std::span<const double> level_grad_values, const CriteriaMask& mask) {
  const double cut = top_fraction_cut(level_grad_values, thr.r_grad);
  return fired_clauses(props, ref, thr, cut, mask) != 0;
}

nlohmann::json to_json(const Thresholds& t) {
  return {{"t_grad", t.t_grad}, {"t_vort", t.t_vort}, {"t_mom", t.t_mom},
          {"t_kh", t.t_kh},     {"r_grad", t.r_grad}};
}

Thresholds thresholds_from_json(const nlohmann::json& j, Thresholds t) {
  if (j.contains("t_grad")) t.t_grad = j.at("t_grad").get<double>();
  if (j.contains("t_vort")) t.t_vort = j.at("t_vort").get<double>();
  if (j.contains("t_mom")) t.t_mom = j.at("t_mom").get<double>();
  if (j.contains("t_kh")) t.t_kh = j.at("t_kh").get<double>();
  if (j.contains("r_grad")) t.r_grad = j.at("r_grad").get<double>();
  for (double v : {t.t_grad, t.t_vort, t.t_mom, t.t_kh})
    if (!(v >= 0.0)) throw ConfigError("thresholds must be nonnegative");
  if (!(t.r_grad >= 0.0 && t.r_grad <= 1.0)) throw ConfigError("r_grad must lie in [0, 1]");
  return t;
}

}  // namespace amrt::pruning
