#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "amrt/grid.hpp"
#include "amrt/solver.hpp"
#include "amrt/tokenizer.hpp"

namespace amrt::solver {

// One simulated case: frames at uniform time spacing.
using Case = std::vector<Field>;

enum class Optimizer { sgd, adam };

struct TrainOptions {
  std::size_t epochs = 1;
  // Overrides epochs when nonzero.
  std::size_t max_steps = 0;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::sgd;
  // Multiplies the warmup schedule.
  double lr_scale = 1.0;
  // Samples are (t - s, t, t + s) frame triples.
  std::size_t frame_stride = 1;
  // Fresh thresholds from the sampling ranges for every sample; otherwise the
  // tokenizer config's fixed thresholds.
  bool sample_thresholds = true;
  bool zero_head = false;

  void validate() const;
  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

nlohmann::json to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainLog {
  std::vector<double> step_loss;
  std::vector<EpochRecord> epochs;
  std::size_t zero_label_samples = 0;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct TrainResult {
  SolverParams params;
  TrainLog log;
};

struct SampleRef {
  std::size_t case_index = 0;
  std::size_t frame = 0;  // index of u_t
};

// Every (case, t) with both t - stride and t + stride in range.
std::vector<SampleRef> sample_refs(const std::vector<Case>& data, std::size_t stride);

// Input tokens from tokenize_pair(u_{t-s}, u_t) and labels aggregated from
// u_{t+s} over the same tree.
struct Sample {
  tokenizer::TokenSet input;
  tokenizer::TokenSet label;
};
Sample make_sample(const std::vector<Case>& data, const SampleRef& ref,
                   const tokenizer::TokenizerConfig& tok, std::size_t stride);

// Loss and parameter gradients (for_each order) for one sample.
struct SampleGrad {
  double loss = 0.0;
  bool zero_label = false;
  std::vector<Matrix> grads;
};
SampleGrad sample_gradient(const SolverParams& params, const Sample& sample);

// Starts from init_params(cfg, opts.seed).
TrainResult train(const std::vector<Case>& data, const SolverConfig& cfg,
                  const tokenizer::TokenizerConfig& tok, const TrainOptions& opts);
// Continues from given parameters.
TrainResult train(const std::vector<Case>& data, SolverParams params,
                  const tokenizer::TokenizerConfig& tok, const TrainOptions& opts);

struct Metrics {
  double nmse = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};

struct CaseReport {
  std::size_t case_index = 0;
  std::size_t samples = 0;
  Metrics model, identity, floor;
};

// Model: predictions painted back onto the grid. Identity: u_t as the
// prediction of u_{t+s}. Floor: the label tokens themselves painted back,
// the best any model can reach on that tree. All against raw u_{t+s}.
struct EvalReport {
  std::vector<CaseReport> cases;
  std::size_t samples = 0;
  double mean_tokens = 0.0;
  Metrics model, identity, floor;
};

// Uses the tokenizer config's thresholds as given.
EvalReport evaluate(const SolverParams& params, const std::vector<Case>& data,
                    const tokenizer::TokenizerConfig& tok, std::size_t frame_stride = 1);

nlohmann::json to_json(const EvalReport& r);

// All frames of every `.nsgrid` file in `dir`, sorted by file name, each
// optionally block-averaged by `downsample`.
std::vector<Case> load_dataset(const std::filesystem::path& dir, std::size_t downsample = 1);

// Periodic Gaussian bump in u (and half of it in v) translating one cell per
// frame along x. Channels u, v.
Case advection_case(std::size_t size, std::size_t frames, std::uint64_t seed);

}  // namespace amrt::solver
