#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "amrt/grid.hpp"

namespace amrt::riemann {

struct RiemannConfig {
  std::size_t resolution = 128;
  double final_time = 0.3;
  std::size_t frames = 200;
  std::size_t cases = 10;
  double perturb_amplitude = 0.2;
  std::uint64_t seed = 0;
  double gamma = 1.4;
  double cfl = 0.4;

  // Throws ConfigError on violated invariants.
  void validate() const;
};

nlohmann::json to_json(const RiemannConfig& cfg);
RiemannConfig riemann_config_from_json(const nlohmann::json& j);

struct Primitive {
  double rho = 0.0;
  double u = 0.0;
  double v = 0.0;
  double p = 0.0;
};

enum class Boundary { neumann, periodic };

// Conservative variables (rho, rho*u, rho*v, E) per cell, row-major like Field.
struct EulerState {
  std::size_t height = 0;
  std::size_t width = 0;
  double gamma = 1.4;
  std::vector<std::array<double, 4>> cells;

  std::array<double, 4>& at(std::size_t i, std::size_t j) { return cells[i * width + j]; }
  const std::array<double, 4>& at(std::size_t i, std::size_t j) const {
    return cells[i * width + j];
  }

  Primitive primitive(std::size_t i, std::size_t j) const;

  friend bool operator==(const EulerState&, const EulerState&) = default;
};

std::array<double, 4> to_conservative(const Primitive& w, double gamma);

// Samples `init` at every cell center.
EulerState make_state(std::size_t height, std::size_t width, double gamma,
                      const std::function<Primitive(double x, double y)>& init);

// Six shared base constants of the four-quadrant configuration, in the
// order {1.5, 0.5323, 0.138, 1.206, 0.3, 0.029}.
std::array<double, 6> base_constants();
std::array<double, 6> perturbed_constants(const RiemannConfig& cfg, std::size_t case_index);

EulerState initial_state(const RiemannConfig& cfg, std::size_t case_index);

// cfl * min h / (|u| + |v| + 2 c); throws PositivityError at the first bad cell.
double stable_dt(const EulerState& state, double cfl);

// One SSP-RK2 step: MUSCL/minmod reconstruction of primitives, Rusanov flux.
// Throws PositivityError if either stage produces a non-physical state.
EulerState euler_step(const EulerState& state, double dt,
                      Boundary boundary = Boundary::neumann);

namespace serial {
EulerState euler_step(const EulerState& state, double dt,
                      Boundary boundary = Boundary::neumann);
}  // namespace serial

// Primitive channels (u, v, p, rho).
Field to_field(const EulerState& state);

// Integrates one case, storing `frames` snapshots at uniform times in
// [0, final_time].
FrameSequence simulate_case(const RiemannConfig& cfg, std::size_t case_index);

// All cases; cases run concurrently. Each sequence is handed to `sink` as it
// completes (order of invocation is by completion, sequences carry case_id).
void simulate(const RiemannConfig& cfg, const std::function<void(FrameSequence&&)>& sink);
std::vector<FrameSequence> simulate(const RiemannConfig& cfg);

}  // namespace amrt::riemann
