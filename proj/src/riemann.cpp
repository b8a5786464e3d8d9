#include "amrt/riemann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "amrt/error.hpp"
#include "amrt/random.hpp"

namespace amrt::riemann {

namespace {

constexpr std::size_t kGhost = 2;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

// Primitive state in direction-local form: normal and tangential velocity.
struct Local {
  double rho, un, ut, p;
};

struct Flux {
  double mass, normal, tangential, energy;
};

inline Flux rusanov(const Local& l, const Local& r, double gamma) {
  const double gm1 = gamma - 1.0;
  const double el = l.p / gm1 + 0.5 * l.rho * (l.un * l.un + l.ut * l.ut);
  const double er = r.p / gm1 + 0.5 * r.rho * (r.un * r.un + r.ut * r.ut);
  const double cl = std::sqrt(gamma * l.p / l.rho);
  const double cr = std::sqrt(gamma * r.p / r.rho);
  const double alpha = std::max(std::abs(l.un) + cl, std::abs(r.un) + cr);

  const double ml = l.rho * l.un, mr = r.rho * r.un;
  Flux f;
  f.mass = 0.5 * (ml + mr) - 0.5 * alpha * (r.rho - l.rho);
  f.normal = 0.5 * (ml * l.un + l.p + mr * r.un + r.p) - 0.5 * alpha * (mr - ml);
  f.tangential = 0.5 * (ml * l.ut + mr * r.ut) - 0.5 * alpha * (r.rho * r.ut - l.rho * l.ut);
  f.energy = 0.5 * ((el + l.p) * l.un + (er + r.p) * r.un) - 0.5 * alpha * (er - el);
  return f;
}

// Padded primitive grid with kGhost layers on every side.
struct Padded {
  std::size_t height, width, stride;
  std::vector<Primitive> w;
  Primitive& at(std::ptrdiff_t i, std::ptrdiff_t j) {
    return w[static_cast<std::size_t>(i + kGhost) * stride + static_cast<std::size_t>(j + kGhost)];
  }
  const Primitive& at(std::ptrdiff_t i, std::ptrdiff_t j) const {
    return w[static_cast<std::size_t>(i + kGhost) * stride + static_cast<std::size_t>(j + kGhost)];
  }
};

Padded pad_primitives(const EulerState& s, Boundary boundary) {
  Padded p{s.height, s.width, s.width + 2 * kGhost, {}};
  p.w.resize((s.height + 2 * kGhost) * p.stride);
  const auto h = static_cast<std::ptrdiff_t>(s.height);
  const auto w = static_cast<std::ptrdiff_t>(s.width);

  for (std::ptrdiff_t i = 0; i < h; ++i) {
    for (std::ptrdiff_t j = 0; j < w; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const Primitive q = s.primitive(ui, uj);
      if (!(q.rho > 0.0)) throw PositivityError("positivity violated: density", ui, uj);
      if (!(q.p > 0.0)) throw PositivityError("positivity violated: pressure", ui, uj);
      p.at(i, j) = q;
    }
  }

  auto src = [&](std::ptrdiff_t k, std::ptrdiff_t n) {
    if (boundary == Boundary::periodic) return ((k % n) + n) % n;
    return std::clamp<std::ptrdiff_t>(k, 0, n - 1);
  };
  const auto g = static_cast<std::ptrdiff_t>(kGhost);
  for (std::ptrdiff_t i = -g; i < h + g; ++i) {
    for (std::ptrdiff_t j = -g; j < w + g; ++j) {
      if (i >= 0 && i < h && j >= 0 && j < w) continue;
      p.at(i, j) = p.at(src(i, h), src(j, w));
    }
  }
  return p;
}

inline Local limited_left(const Local& m, const Local& c, const Local& r) {
  return {c.rho + 0.5 * minmod(c.rho - m.rho, r.rho - c.rho),
          c.un + 0.5 * minmod(c.un - m.un, r.un - c.un),
          c.ut + 0.5 * minmod(c.ut - m.ut, r.ut - c.ut),
          c.p + 0.5 * minmod(c.p - m.p, r.p - c.p)};
}

inline Local limited_right(const Local& m, const Local& c, const Local& r) {
  return {c.rho - 0.5 * minmod(c.rho - m.rho, r.rho - c.rho),
          c.un - 0.5 * minmod(c.un - m.un, r.un - c.un),
          c.ut - 0.5 * minmod(c.ut - m.ut, r.ut - c.ut),
          c.p - 0.5 * minmod(c.p - m.p, r.p - c.p)};
}

inline Local along_x(const Primitive& q) { return {q.rho, q.u, q.v, q.p}; }
inline Local along_y(const Primitive& q) { return {q.rho, q.v, q.u, q.p}; }

// Face fluxes along one line of n cells; `get(k)` returns the local state of
// cell k for k in [-2, n+1]. faces[k] is the flux through the face between
// cells k-1 and k.
template <typename Get>
void line_fluxes(std::size_t n, const Get& get, double gamma, std::vector<Flux>& faces) {
  faces.resize(n + 1);
  for (std::size_t f = 0; f <= n; ++f) {
    const auto k = static_cast<std::ptrdiff_t>(f);
    const Local l = limited_left(get(k - 2), get(k - 1), get(k));
    const Local r = limited_right(get(k - 1), get(k), get(k + 1));
    faces[f] = rusanov(l, r, gamma);
  }
}

// dq/dt for every cell; the x and y sweeps use the same line kernel so the
// scheme is exactly symmetric under (x, y, u, v) -> (y, x, v, u).
std::vector<std::array<double, 4>> rhs(const EulerState& s, Boundary boundary, bool parallel) {
  const Padded p = pad_primitives(s, boundary);
  const std::size_t h = s.height, w = s.width;
  const double inv_hx = static_cast<double>(w);
  const double inv_hy = static_cast<double>(h);
  std::vector<std::array<double, 4>> xterm(h * w), yterm(h * w);

#pragma omp parallel if (parallel)
  {
    std::vector<Flux> faces;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(h); ++i) {
      line_fluxes(w, [&](std::ptrdiff_t k) { return along_x(p.at(i, k)); }, s.gamma, faces);
      for (std::size_t j = 0; j < w; ++j) {
        const Flux& a = faces[j];
        const Flux& b = faces[j + 1];
        auto& t = xterm[static_cast<std::size_t>(i) * w + j];
        t[0] = (b.mass - a.mass) * inv_hx;
        t[1] = (b.normal - a.normal) * inv_hx;
        t[2] = (b.tangential - a.tangential) * inv_hx;
        t[3] = (b.energy - a.energy) * inv_hx;
      }
    }
#pragma omp for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(w); ++j) {
      line_fluxes(h, [&](std::ptrdiff_t k) { return along_y(p.at(k, j)); }, s.gamma, faces);
      for (std::size_t i = 0; i < h; ++i) {
        const Flux& a = faces[i];
        const Flux& b = faces[i + 1];
        auto& t = yterm[i * w + static_cast<std::size_t>(j)];
        t[0] = (b.mass - a.mass) * inv_hy;
        t[1] = (b.tangential - a.tangential) * inv_hy;
        t[2] = (b.normal - a.normal) * inv_hy;
        t[3] = (b.energy - a.energy) * inv_hy;
      }
    }
  }

  std::vector<std::array<double, 4>> out(h * w);
  for (std::size_t n = 0; n < h * w; ++n)
    for (int c = 0; c < 4; ++c) out[n][c] = -xterm[n][c] - yterm[n][c];
  return out;
}

EulerState step_impl(const EulerState& s, double dt, Boundary boundary, bool parallel) {
  const auto k1 = rhs(s, boundary, parallel);
  EulerState stage = s;
  for (std::size_t n = 0; n < s.cells.size(); ++n)
    for (int c = 0; c < 4; ++c) stage.cells[n][c] = s.cells[n][c] + dt * k1[n][c];

  const auto k2 = rhs(stage, boundary, parallel);
  EulerState out = s;
  for (std::size_t n = 0; n < s.cells.size(); ++n)
    for (int c = 0; c < 4; ++c)
      out.cells[n][c] = 0.5 * s.cells[n][c] + 0.5 * (stage.cells[n][c] + dt * k2[n][c]);

  for (std::size_t n = 0; n < out.cells.size(); ++n) {
    const Primitive q = out.primitive(n / out.width, n % out.width);
    if (!(q.rho > 0.0) || !(q.p > 0.0) || !std::isfinite(q.rho) || !std::isfinite(q.p))
      throw PositivityError("positivity lost after step", n / out.width, n % out.width);
  }
  return out;
}

}  // namespace

void RiemannConfig::validate() const {
  if (!(perturb_amplitude >= 0.0 && perturb_amplitude < 1.0))
    throw ConfigError("riemann.perturb_amplitude must lie in [0, 1)");
  if (!is_power_of_two(resolution)) throw ConfigError("riemann.resolution must be a power of 2");
  if (frames < 2) throw ConfigError("riemann.frames must be >= 2");
  if (!(gamma > 1.0)) throw ConfigError("riemann.gamma must be > 1");
  if (!(cfl > 0.0 && cfl < 1.0)) throw ConfigError("riemann.cfl must lie in (0, 1)");
  if (!(final_time >= 0.0)) throw ConfigError("riemann.final_time must be >= 0");
  if (cases == 0) throw ConfigError("riemann.cases must be >= 1");
}

nlohmann::json to_json(const RiemannConfig& cfg) {
  return {{"resolution", cfg.resolution}, {"final_time", cfg.final_time},
          {"frames", cfg.frames},         {"cases", cfg.cases},
          {"perturb_amplitude", cfg.perturb_amplitude},
          {"seed", cfg.seed},             {"gamma", cfg.gamma},
          {"cfl", cfg.cfl}};
}

RiemannConfig riemann_config_from_json(const nlohmann::json& j) {
  RiemannConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "resolution") cfg.resolution = value.get<std::size_t>();
    else if (key == "final_time") cfg.final_time = value.get<double>();
    else if (key == "frames") cfg.frames = value.get<std::size_t>();
    else if (key == "cases") cfg.cases = value.get<std::size_t>();
    else if (key == "perturb_amplitude") cfg.perturb_amplitude = value.get<double>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "gamma") cfg.gamma = value.get<double>();
    else if (key == "cfl") cfg.cfl = value.get<double>();
    else throw ConfigError("unknown key riemann." + key);
  }
  cfg.validate();
  return cfg;
}

Primitive EulerState::primitive(std::size_t i, std::size_t j) const {
  const auto& q = at(i, j);
  Primitive w;
  w.rho = q[0];
  w.u = q[1] / q[0];
  w.v = q[2] / q[0];
  w.p = (gamma - 1.0) * (q[3] - 0.5 * q[0] * (w.u * w.u + w.v * w.v));
  return w;
}

std::array<double, 4> to_conservative(const Primitive& w, double gamma) {
  return {w.rho, w.rho * w.u, w.rho * w.v,
          w.p / (gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v)};
}

EulerState make_state(std::size_t height, std::size_t width, double gamma,
                      const std::function<Primitive(double, double)>& init) {
  EulerState s{height, width, gamma, std::vector<std::array<double, 4>>(height * width)};
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const auto [x, y] = cell_center(i, j, height, width);
      s.at(i, j) = to_conservative(init(x, y), gamma);
    }
  }
  return s;
}

std::array<double, 6> base_constants() { return {1.5, 0.5323, 0.138, 1.206, 0.3, 0.029}; }

std::array<double, 6> perturbed_constants(const RiemannConfig& cfg, std::size_t case_index) {
  auto c = base_constants();
  auto engine = make_engine(cfg.seed, case_index);
  const double a = cfg.perturb_amplitude;
  for (auto& v : c) {
    const double factor = 1.0 + uniform(engine, -a, a);
    v *= factor;
  }
  return c;
}

EulerState initial_state(const RiemannConfig& cfg, std::size_t case_index) {
  cfg.validate();
  if (case_index >= cfg.cases)
    throw ConfigError("case index " + std::to_string(case_index) + " out of range");
  const auto c = perturbed_constants(cfg, case_index);
  // Quadrant states share constants: c0 = rho/p (NE), c1 = rho (NW/SE),
  // c2 = rho (SW), c3 = speed, c4 = p (NW/SE), c5 = p (SW).
  const Primitive ne{c[0], 0.0, 0.0, c[0]};
  const Primitive nw{c[1], c[3], 0.0, c[4]};
  const Primitive sw{c[2], c[3], c[3], c[5]};
  const Primitive se{c[1], 0.0, c[3], c[4]};
  return make_state(cfg.resolution, cfg.resolution, cfg.gamma, [&](double x, double y) {
    if (y > 0.5) return x > 0.5 ? ne : nw;
    return x > 0.5 ? se : sw;
  });
}

double stable_dt(const EulerState& state, double cfl) {
  const double h = 1.0 / static_cast<double>(std::max(state.height, state.width));
  double min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < state.height; ++i) {
    for (std::size_t j = 0; j < state.width; ++j) {
      const Primitive q = state.primitive(i, j);
      if (!(q.rho > 0.0)) throw PositivityError("positivity violated: density", i, j);
      if (!(q.p > 0.0)) throw PositivityError("positivity violated: pressure", i, j);
      const double a = std::sqrt(state.gamma * q.p / q.rho);
      min_ratio = std::min(min_ratio, h / (std::abs(q.u) + std::abs(q.v) + 2.0 * a));
    }
  }
  return cfl * min_ratio;
}

EulerState euler_step(const EulerState& state, double dt, Boundary boundary) {
  return step_impl(state, dt, boundary, true);
}

EulerState serial::euler_step(const EulerState& state, double dt, Boundary boundary) {
  return step_impl(state, dt, boundary, false);
}

Field to_field(const EulerState& state) {
  Field f(state.height, state.width, {"u", "v", "p", "rho"});
  for (std::size_t i = 0; i < state.height; ++i) {
    for (std::size_t j = 0; j < state.width; ++j) {
      const Primitive q = state.primitive(i, j);
      f.at(i, j, 0) = q.u;
      f.at(i, j, 1) = q.v;
      f.at(i, j, 2) = q.p;
      f.at(i, j, 3) = q.rho;
    }
  }
  return f;
}

FrameSequence simulate_case(const RiemannConfig& cfg, std::size_t case_index) {
  EulerState state = initial_state(cfg, case_index);
  FrameSequence seq;
  seq.dt = cfg.final_time / static_cast<double>(cfg.frames - 1);
  seq.case_id = "case_" + std::to_string(case_index);
  seq.seed = cfg.seed;
  seq.settings = to_json(cfg);
  seq.settings["case_index"] = case_index;
  seq.settings["scheme"] = "muscl-minmod/rusanov/ssp-rk2";
  seq.frames.reserve(cfg.frames);
  seq.frames.push_back(to_field(state));

  double t = 0.0;
  for (std::size_t f = 1; f < cfg.frames; ++f) {
    const double target =
        cfg.final_time * static_cast<double>(f) / static_cast<double>(cfg.frames - 1);
    while (t < target) {
      double dt = std::min(stable_dt(state, cfg.cfl), target - t);
      for (int halvings = 0;; ++halvings) {
        try {
          state = euler_step(state, dt);
          break;
        } catch (const PositivityError& e) {
          if (halvings == 5)
            throw Error(seq.case_id + " frame " + std::to_string(f) + ": " + e.what());
          dt *= 0.5;
        }
      }
      // land exactly on the snapshot time
      t = (target - t <= dt) ? target : t + dt;
    }
    seq.frames.push_back(to_field(state));
  }
  return seq;
}

void simulate(const RiemannConfig& cfg, const std::function<void(FrameSequence&&)>& sink) {
  cfg.validate();
  const auto n = static_cast<std::ptrdiff_t>(cfg.cases);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < n; ++c) {
    try {
      FrameSequence seq = simulate_case(cfg, static_cast<std::size_t>(c));
#pragma omp critical(amrt_simulate_sink)
      sink(std::move(seq));
    } catch (...) {
#pragma omp critical(amrt_simulate_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<FrameSequence> simulate(const RiemannConfig& cfg) {
  std::vector<FrameSequence> out(cfg.cases);
  simulate(cfg, [&](FrameSequence&& seq) {
    const auto idx = seq.settings.at("case_index").get<std::size_t>();
    out[idx] = std::move(seq);
  });
  return out;
}

}  // namespace amrt::riemann
