#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "amrt/grid.hpp"
#include "amrt/random.hpp"

namespace testing {

inline amrt::Field random_field(std::mt19937_64& rng, std::size_t h, std::size_t w,
                                std::vector<std::string> channels = {"u", "v", "p", "rho"},
                                double lo = -1.0, double hi = 1.0) {
  amrt::Field f(h, w, std::move(channels));
  for (auto& x : f.data()) x = amrt::uniform(rng, lo, hi);
  return f;
}

// Field with channels u, v from a function of the cell center.
template <typename F>
amrt::Field velocity_field(std::size_t h, std::size_t w, F&& uv) {
  amrt::Field f(h, w, {"u", "v"});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const auto [x, y] = amrt::cell_center(i, j, h, w);
      const auto [u, v] = uv(x, y);
      f.at(i, j, 0) = u;
      f.at(i, j, 1) = v;
    }
  return f;
}

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

// Relative error that treats both-tiny values as agreeing.
inline double grad_err(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace testing
