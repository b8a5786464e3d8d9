#pragma once

#include <filesystem>

#include <json.hpp>

#include "amrt/riemann.hpp"
#include "amrt/solver.hpp"
#include "amrt/tokenizer.hpp"
#include "amrt/train.hpp"

namespace amrt {

// The JSON document accepted by every CLI command. All blocks are optional;
// unknown blocks and keys are rejected.
struct AppConfig {
  tokenizer::TokenizerConfig tokenizer;
  solver::SolverConfig solver;
  riemann::RiemannConfig riemann;
  solver::TrainOptions train;
};

nlohmann::json to_json(const AppConfig& cfg);
// JSON type errors surface as ConfigError.
AppConfig app_config_from_json(const nlohmann::json& j);
AppConfig load_app_config(const std::filesystem::path& path);

}  // namespace amrt
