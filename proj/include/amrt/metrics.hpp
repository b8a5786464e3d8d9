#pragma once

#include <cstddef>
#include <cstdint>

#include "amrt/solver.hpp"
#include "amrt/tokenizer.hpp"

namespace amrt::metrics {

// FLOPs of one encoder forward pass, one multiply-add = 2 FLOPs. Softmax,
// normalization, embedding and head costs are not counted.
struct CostReport {
  std::size_t token_count = 0;
  std::size_t stored_cells = 0;
  std::size_t regular_count = 0;
  std::uint64_t attention_flops = 0;   // 4 N^2 d per layer
  std::uint64_t projection_flops = 0;  // 8 N d^2 per layer
  std::uint64_t ffn_flops = 0;         // 4 N d d_ff per layer
  std::uint64_t total_flops = 0;
  double reduction_vs_regular = 0.0;
};

CostReport attention_flops(std::size_t n, const solver::SolverConfig& cfg);

// regular_n is the token count of the uniform comparison grid, (H/k)^2.
CostReport token_stats(const tokenizer::TokenSet& tokens, std::size_t regular_n,
                       const solver::SolverConfig& cfg);

// (H/k) * (W/k): one token per k x k block of finest cells.
std::size_t regular_token_count(std::size_t height, std::size_t width, std::size_t k);

}  // namespace amrt::metrics
