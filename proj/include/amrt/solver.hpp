#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "amrt/posenc.hpp"
#include "amrt/tape.hpp"
#include "amrt/tokenizer.hpp"

namespace amrt::solver {

struct SolverConfig {
  std::size_t d_model = 256;
  std::size_t n_heads = 4;
  std::size_t n_layers = 6;
  std::size_t d_ff = 1024;
  std::size_t warmup_steps = 4000;
  std::size_t k = 2;
  std::size_t c = 4;
  bool positional_encoding = true;
  // Off: the head predicts the next state. On: the head predicts an
  // increment added to the input features.
  bool residual = false;

  std::size_t cells() const noexcept { return k * k; }
  std::size_t input_width() const noexcept { return cells() * (c + 3); }
  std::size_t output_width() const noexcept { return cells() * c; }

  void validate() const;
  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

nlohmann::json to_json(const SolverConfig& cfg);
// Rejects unknown keys; missing keys keep their defaults.
SolverConfig solver_config_from_json(const nlohmann::json& j);

struct LayerParams {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, wk, wv, wo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

struct SolverParams {
  SolverConfig cfg;
  Matrix embed_w, embed_b;
  std::vector<LayerParams> layers;
  Matrix head_w, head_b;

  // Visits every tensor in declaration order (the checkpoint order).
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(self.embed_w);
    f(self.embed_b);
    for (auto& l : self.layers) {
      f(l.ln1_gain);
      f(l.ln1_bias);
      f(l.wq);
      f(l.wk);
      f(l.wv);
      f(l.wo);
      f(l.ln2_gain);
      f(l.ln2_bias);
      f(l.w1);
      f(l.b1);
      f(l.w2);
      f(l.b2);
    }
    f(self.head_w);
    f(self.head_b);
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit gains.
SolverParams init_params(const SolverConfig& cfg, std::uint64_t seed);
// All tensors zero-shaped per cfg, gains included.
SolverParams zero_params(const SolverConfig& cfg);
// Embedding and head copy the input features through the residual stream;
// attention and FFN outputs are zeroed. Needs d_model >= K * c and turns
// positional encoding off.
SolverParams identity_params(SolverConfig cfg);

// N x K(c+3), each cell [features..., depth, cx, cy].
Matrix token_matrix(const tokenizer::TokenSet& tokens);
// N x K c, features only.
Matrix token_features(const tokenizer::TokenSet& tokens);
// Parent center and parent depth of each token.
std::vector<posenc::Position> token_positions(const tokenizer::TokenSet& tokens);

// The forward graph recorded on a tape. `params` lists the leaf ids in
// for_each order.
struct Graph {
  Tape tape;
  std::vector<Tape::Id> params;
  Tape::Id output = 0;
};

Graph forward_graph(const SolverParams& params, const tokenizer::TokenSet& tokens,
                    bool requires_grad);

// N x K c predicted features.
Matrix forward(const SolverParams& params, const tokenizer::TokenSet& tokens);
// Same tree as `tokens` with predicted features.
tokenizer::TokenSet predict(const SolverParams& params, const tokenizer::TokenSet& tokens);

// Writes predicted feature rows back into a copy of `tokens`.
tokenizer::TokenSet with_features(const tokenizer::TokenSet& tokens, const Matrix& features);

// sum((p - l)^2) / sum(l^2); plain MSE when the label is all zero, in which
// case *fallback is set.
double nmse(std::span<const double> pred, std::span<const double> label,
            bool* fallback = nullptr);
double mse(std::span<const double> pred, std::span<const double> label);
double mae(std::span<const double> pred, std::span<const double> label);

// (1/sqrt(d_model)) * min(t^-1/2, t * warmup^-3/2); t >= 1.
double lr_schedule(std::size_t step, const SolverConfig& cfg);

}  // namespace amrt::solver
