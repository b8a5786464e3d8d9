#include "amrt/config.hpp"

#include <fstream>
#include <string>

#include "amrt/error.hpp"

namespace amrt {

namespace tokenizer {

namespace {

nlohmann::json range_json(const pruning::Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

pruning::Range range_from(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2)
    throw ConfigError("tokenizer.sampling." + key + " must be a [lo, hi] pair");
  pruning::Range r{j[0].get<double>(), j[1].get<double>()};
  if (!(r.lo >= 0.0 && r.lo <= r.hi))
    throw ConfigError("tokenizer.sampling." + key + " needs 0 <= lo <= hi");
  return r;
}

}  // namespace

nlohmann::json to_json(const TokenizerConfig& cfg) {
  return {{"k", cfg.k},
          {"min_depth", cfg.min_depth},
          {"max_depth", cfg.max_depth},
          {"mode", cfg.mode == Mode::complete ? "complete" : "lossy"},
          {"t_grad", cfg.thresholds.t_grad},
          {"t_vort", cfg.thresholds.t_vort},
          {"t_mom", cfg.thresholds.t_mom},
          {"t_kh", cfg.thresholds.t_kh},
          {"r_grad", cfg.thresholds.r_grad},
          {"use_virtual_velocity", cfg.use_virtual_velocity},
          {"percentile_scope",
           cfg.percentile_scope == PercentileScope::level ? "level" : "candidates"},
          {"criteria",
           {{"grad", cfg.criteria.grad},
            {"vort", cfg.criteria.vort},
            {"mom", cfg.criteria.mom},
            {"kh", cfg.criteria.kh}}},
          {"sampling",
           {{"grad", range_json(cfg.sampling.grad)},
            {"vort", range_json(cfg.sampling.vort)},
            {"mom", range_json(cfg.sampling.mom)},
            {"kh", range_json(cfg.sampling.kh)}}}};
}

TokenizerConfig tokenizer_config_from_json(const nlohmann::json& j) {
  TokenizerConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "k") cfg.k = value.get<std::size_t>();
    else if (key == "min_depth") cfg.min_depth = value.get<std::size_t>();
    else if (key == "max_depth") cfg.max_depth = value.get<std::size_t>();
    else if (key == "mode") {
      const auto m = value.get<std::string>();
      if (m == "complete") cfg.mode = Mode::complete;
      else if (m == "lossy") cfg.mode = Mode::lossy;
      else throw ConfigError("tokenizer.mode must be complete or lossy, got " + m);
    } else if (key == "t_grad") cfg.thresholds.t_grad = value.get<double>();
    else if (key == "t_vort") cfg.thresholds.t_vort = value.get<double>();
    else if (key == "t_mom") cfg.thresholds.t_mom = value.get<double>();
    else if (key == "t_kh") cfg.thresholds.t_kh = value.get<double>();
    else if (key == "r_grad") cfg.thresholds.r_grad = value.get<double>();
    else if (key == "use_virtual_velocity") cfg.use_virtual_velocity = value.get<bool>();
    else if (key == "percentile_scope") {
      const auto s = value.get<std::string>();
      if (s == "level") cfg.percentile_scope = PercentileScope::level;
      else if (s == "candidates") cfg.percentile_scope = PercentileScope::candidates;
      else throw ConfigError("tokenizer.percentile_scope must be level or candidates, got " + s);
    } else if (key == "criteria") {
      for (const auto& [ck, cv] : value.items()) {
        if (ck == "grad") cfg.criteria.grad = cv.get<bool>();
        else if (ck == "vort") cfg.criteria.vort = cv.get<bool>();
        else if (ck == "mom") cfg.criteria.mom = cv.get<bool>();
        else if (ck == "kh") cfg.criteria.kh = cv.get<bool>();
        else throw ConfigError("unknown key tokenizer.criteria." + ck);
      }
    } else if (key == "sampling") {
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "grad") cfg.sampling.grad = range_from(sv, sk);
        else if (sk == "vort") cfg.sampling.vort = range_from(sv, sk);
        else if (sk == "mom") cfg.sampling.mom = range_from(sv, sk);
        else if (sk == "kh") cfg.sampling.kh = range_from(sv, sk);
        else throw ConfigError("unknown key tokenizer.sampling." + sk);
      }
    } else {
      throw ConfigError("unknown key tokenizer." + key);
    }
  }
  cfg.sampling.r_grad = cfg.thresholds.r_grad;
  cfg.validate();
  return cfg;
}

}  // namespace tokenizer

nlohmann::json to_json(const AppConfig& cfg) {
  return {{"tokenizer", tokenizer::to_json(cfg.tokenizer)},
          {"solver", solver::to_json(cfg.solver)},
          {"riemann", riemann::to_json(cfg.riemann)},
          {"train", solver::to_json(cfg.train)}};
}

AppConfig app_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  AppConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (!value.is_object()) throw ConfigError("config block " + key + " must be an object");
      if (key == "tokenizer") cfg.tokenizer = tokenizer::tokenizer_config_from_json(value);
      else if (key == "solver") cfg.solver = solver::solver_config_from_json(value);
      else if (key == "riemann") cfg.riemann = riemann::riemann_config_from_json(value);
      else if (key == "train") cfg.train = solver::train_options_from_json(value);
      else throw ConfigError("unknown config block " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return app_config_from_json(j);
}

}  // namespace amrt
