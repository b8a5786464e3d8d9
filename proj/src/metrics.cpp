#include "amrt/metrics.hpp"

#include <limits>
#include <string>

#include "amrt/error.hpp"

namespace amrt::metrics {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw ShapeError("FLOP count overflows 64 bits");
  return a * b;
}

}  // namespace

CostReport attention_flops(std::size_t n, const solver::SolverConfig& cfg) {
  const std::uint64_t N = n, d = cfg.d_model, ff = cfg.d_ff, L = cfg.n_layers;
  CostReport r;
  r.token_count = n;
  r.attention_flops = checked_mul(checked_mul(checked_mul(4 * L, N), N), d);
  r.projection_flops = checked_mul(checked_mul(checked_mul(8 * L, N), d), d);
  r.ffn_flops = checked_mul(checked_mul(checked_mul(4 * L, N), d), ff);
  r.total_flops = r.attention_flops + r.projection_flops + r.ffn_flops;
  return r;
}

CostReport token_stats(const tokenizer::TokenSet& tokens, std::size_t regular_n,
                       const solver::SolverConfig& cfg) {
  CostReport r = attention_flops(tokens.tokens.size(), cfg);
  r.stored_cells = tokens.stored_cells();
  r.regular_count = regular_n;
  r.reduction_vs_regular = tokens.tokens.empty()
                               ? 0.0
                               : static_cast<double>(regular_n) /
                                     static_cast<double>(tokens.tokens.size());
  return r;
}

std::size_t regular_token_count(std::size_t height, std::size_t width, std::size_t k) {
  if (k == 0) throw ConfigError("k must be positive");
  if (height % k || width % k)
    throw ShapeError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by k=" + std::to_string(k));
  return (height / k) * (width / k);
}

}  // namespace amrt::metrics
