#include "amrt/solver.hpp"

#include <cmath>
#include <random>
#include <string>

#include "amrt/error.hpp"
#include "amrt/random.hpp"

namespace amrt::solver {

void SolverConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || warmup_steps == 0 || c == 0)
    throw ConfigError("solver sizes must be positive");
  if (k < 2) throw ConfigError("solver.k must be >= 2");
  if (d_model % n_heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  if (positional_encoding && d_model < 6)
    throw ConfigError("positional encoding needs d_model >= 6");
}

nlohmann::json to_json(const SolverConfig& cfg) {
  return {{"d_model", cfg.d_model},
          {"n_heads", cfg.n_heads},
          {"n_layers", cfg.n_layers},
          {"d_ff", cfg.d_ff},
          {"warmup_steps", cfg.warmup_steps},
          {"k", cfg.k},
          {"c", cfg.c},
          {"positional_encoding", cfg.positional_encoding},
          {"residual", cfg.residual}};
}

SolverConfig solver_config_from_json(const nlohmann::json& j) {
  SolverConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "d_model") cfg.d_model = value.get<std::size_t>();
    else if (key == "n_heads") cfg.n_heads = value.get<std::size_t>();
    else if (key == "n_layers") cfg.n_layers = value.get<std::size_t>();
    else if (key == "d_ff") cfg.d_ff = value.get<std::size_t>();
    else if (key == "warmup_steps") cfg.warmup_steps = value.get<std::size_t>();
    else if (key == "k") cfg.k = value.get<std::size_t>();
    else if (key == "c") cfg.c = value.get<std::size_t>();
    else if (key == "positional_encoding") cfg.positional_encoding = value.get<bool>();
    else if (key == "residual") cfg.residual = value.get<bool>();
    else throw ConfigError("unknown key solver." + key);
  }
  cfg.validate();
  return cfg;
}

std::size_t SolverParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const Matrix& m) { n += m.size(); });
  return n;
}

SolverParams zero_params(const SolverConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  SolverParams p;
  p.cfg = cfg;
  p.embed_w = Matrix(cfg.input_width(), d);
  p.embed_b = Matrix(1, d);
  p.layers.resize(cfg.n_layers);
  for (auto& l : p.layers) {
    l.ln1_gain = Matrix(1, d);
    l.ln1_bias = Matrix(1, d);
    l.wq = Matrix(d, d);
    l.wk = Matrix(d, d);
    l.wv = Matrix(d, d);
    l.wo = Matrix(d, d);
    l.ln2_gain = Matrix(1, d);
    l.ln2_bias = Matrix(1, d);
    l.w1 = Matrix(d, cfg.d_ff);
    l.b1 = Matrix(1, cfg.d_ff);
    l.w2 = Matrix(cfg.d_ff, d);
    l.b2 = Matrix(1, d);
  }
  p.head_w = Matrix(d, cfg.output_width());
  p.head_b = Matrix(1, cfg.output_width());
  return p;
}

SolverParams init_params(const SolverConfig& cfg, std::uint64_t seed) {
  SolverParams p = zero_params(cfg);
  auto rng = make_engine(seed, 0x50a1);
  auto fill = [&](Matrix& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows));
    for (auto& v : w.values) v = uniform(rng, -bound, bound);
  };
  fill(p.embed_w);
  for (auto& l : p.layers) {
    l.ln1_gain.values.assign(l.ln1_gain.size(), 1.0);
    l.ln2_gain.values.assign(l.ln2_gain.size(), 1.0);
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.w1);
    fill(l.w2);
  }
  fill(p.head_w);
  return p;
}

SolverParams identity_params(SolverConfig cfg) {
  cfg.positional_encoding = false;
  cfg.residual = false;
  if (cfg.d_model < cfg.output_width())
    throw ConfigError("identity model needs d_model >= K * c");
  SolverParams p = zero_params(cfg);
  for (auto& l : p.layers) {
    l.ln1_gain.values.assign(l.ln1_gain.size(), 1.0);
    l.ln2_gain.values.assign(l.ln2_gain.size(), 1.0);
  }
  for (std::size_t cell = 0; cell < cfg.cells(); ++cell) {
    for (std::size_t ch = 0; ch < cfg.c; ++ch) {
      const std::size_t slot = cell * cfg.c + ch;
      p.embed_w(cell * (cfg.c + 3) + ch, slot) = 1.0;
      p.head_w(slot, slot) = 1.0;
    }
  }
  return p;
}

Matrix token_matrix(const tokenizer::TokenSet& tokens) {
  const std::size_t k2 = tokens.cells_per_token();
  const std::size_t c = tokens.channels.size();
  Matrix m(tokens.tokens.size(), k2 * (c + 3));
  for (std::size_t n = 0; n < tokens.tokens.size(); ++n) {
    const auto& t = tokens.tokens[n];
    for (std::size_t cell = 0; cell < k2; ++cell) {
      const auto& r = t.cells[cell];
      double* row = m.values.data() + n * m.cols + cell * (c + 3);
      for (std::size_t ch = 0; ch < c; ++ch) row[ch] = r.features[ch];
      row[c] = static_cast<double>(r.depth);
      row[c + 1] = r.cx;
      row[c + 2] = r.cy;
    }
  }
  return m;
}

Matrix token_features(const tokenizer::TokenSet& tokens) {
  const std::size_t k2 = tokens.cells_per_token();
  const std::size_t c = tokens.channels.size();
  Matrix m(tokens.tokens.size(), k2 * c);
  for (std::size_t n = 0; n < tokens.tokens.size(); ++n)
    for (std::size_t cell = 0; cell < k2; ++cell)
      for (std::size_t ch = 0; ch < c; ++ch)
        m(n, cell * c + ch) = tokens.tokens[n].cells[cell].features[ch];
  return m;
}

std::vector<posenc::Position> token_positions(const tokenizer::TokenSet& tokens) {
  std::vector<posenc::Position> out;
  out.reserve(tokens.tokens.size());
  for (const auto& t : tokens.tokens) {
    const Region r = t.parent_region(tokens.height, tokens.width, tokens.k);
    const auto [x, y] = r.center(tokens.height, tokens.width);
    out.push_back({x, y, static_cast<double>(t.parent_depth)});
  }
  return out;
}

Graph forward_graph(const SolverParams& params, const tokenizer::TokenSet& tokens,
                    bool requires_grad) {
  const SolverConfig& cfg = params.cfg;
  if (tokens.k != cfg.k || tokens.channels.size() != cfg.c)
    throw ShapeError("forward: tokens have k=" + std::to_string(tokens.k) +
                     ", c=" + std::to_string(tokens.channels.size()) + " but the model expects k=" +
                     std::to_string(cfg.k) + ", c=" + std::to_string(cfg.c));
  if (tokens.tokens.empty()) throw ShapeError("forward: empty token sequence");

  Graph g;
  Tape& t = g.tape;
  params.for_each([&](const Matrix& m) { g.params.push_back(t.leaf(m, requires_grad)); });

  std::size_t next = 0;
  auto param = [&]() { return g.params[next++]; };

  const Tape::Id embed_w = param();
  const Tape::Id embed_b = param();
  Tape::Id x = t.add_row(t.matmul(t.leaf(token_matrix(tokens)), embed_w), embed_b);
  if (cfg.positional_encoding) {
    const auto pos = token_positions(tokens);
    x = t.add(x, t.leaf(Matrix(pos.size(), cfg.d_model, posenc::encode_positions(pos, cfg.d_model))));
  }

  const std::size_t dh = cfg.d_model / cfg.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tape::Id> heads(cfg.n_heads);
  for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
    const Tape::Id ln1_g = param(), ln1_b = param();
    const Tape::Id wq = param(), wk = param(), wv = param(), wo = param();
    const Tape::Id ln2_g = param(), ln2_b = param();
    const Tape::Id w1 = param(), b1 = param(), w2 = param(), b2 = param();

    const Tape::Id h = t.layer_norm(x, ln1_g, ln1_b);
    const Tape::Id q = t.matmul(h, wq);
    const Tape::Id k = t.matmul(h, wk);
    const Tape::Id v = t.matmul(h, wv);
    for (std::size_t head = 0; head < cfg.n_heads; ++head) {
      const std::size_t lo = head * dh, hi = lo + dh;
      const Tape::Id scores =
          t.matmul_nt(t.slice_cols(q, lo, hi), t.slice_cols(k, lo, hi), inv_sqrt_dh);
      heads[head] = t.matmul(t.softmax_rows(scores), t.slice_cols(v, lo, hi));
    }
    const Tape::Id attn = cfg.n_heads == 1 ? heads[0] : t.concat_cols(heads);
    x = t.add(x, t.matmul(attn, wo));

    const Tape::Id h2 = t.layer_norm(x, ln2_g, ln2_b);
    const Tape::Id ff = t.add_row(t.matmul(t.relu(t.add_row(t.matmul(h2, w1), b1)), w2), b2);
    x = t.add(x, ff);
  }

  const Tape::Id head_w = param();
  const Tape::Id head_b = param();
  Tape::Id out = t.add_row(t.matmul(x, head_w), head_b);
  if (cfg.residual) out = t.add(out, t.leaf(token_features(tokens)));
  g.output = out;
  return g;
}

Matrix forward(const SolverParams& params, const tokenizer::TokenSet& tokens) {
  Graph g = forward_graph(params, tokens, false);
  return g.tape.value(g.output);
}

tokenizer::TokenSet with_features(const tokenizer::TokenSet& tokens, const Matrix& features) {
  const std::size_t k2 = tokens.cells_per_token();
  const std::size_t c = tokens.channels.size();
  if (features.rows != tokens.tokens.size() || features.cols != k2 * c)
    throw ShapeError("feature matrix does not match the token set");
  tokenizer::TokenSet out = tokens;
  for (std::size_t n = 0; n < out.tokens.size(); ++n)
    for (std::size_t cell = 0; cell < k2; ++cell)
      for (std::size_t ch = 0; ch < c; ++ch)
        out.tokens[n].cells[cell].features[ch] = features(n, cell * c + ch);
  return out;
}

tokenizer::TokenSet predict(const SolverParams& params, const tokenizer::TokenSet& tokens) {
  return with_features(tokens, forward(params, tokens));
}

namespace {

void check_same(std::span<const double> pred, std::span<const double> label) {
  if (pred.size() != label.size())
    throw ShapeError("metric: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(label.size()) + " labels");
  if (pred.empty()) throw ShapeError("metric over zero elements");
}

}  // namespace

double nmse(std::span<const double> pred, std::span<const double> label, bool* fallback) {
  check_same(pred, label);
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) {
    const double d = pred[n] - label[n];
    num += d * d;
    den += label[n] * label[n];
  }
  if (fallback) *fallback = den == 0.0;
  if (den == 0.0) return num / static_cast<double>(pred.size());
  return num / den;
}

double mse(std::span<const double> pred, std::span<const double> label) {
  check_same(pred, label);
  double s = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) s += (pred[n] - label[n]) * (pred[n] - label[n]);
  return s / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> label) {
  check_same(pred, label);
  double s = 0.0;
  for (std::size_t n = 0; n < pred.size(); ++n) s += std::abs(pred[n] - label[n]);
  return s / static_cast<double>(pred.size());
}

double lr_schedule(std::size_t step, const SolverConfig& cfg) {
  if (step == 0) throw ConfigError("lr_schedule: steps count from 1");
  if (cfg.warmup_steps == 0 || cfg.d_model == 0) throw ConfigError("lr_schedule: zero size");
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return std::min(1.0 / std::sqrt(t), t * std::pow(w, -1.5)) /
         std::sqrt(static_cast<double>(cfg.d_model));
}

}  // namespace amrt::solver
