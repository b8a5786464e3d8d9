#include <doctest.h>

#include <fstream>

#include "amrt/config.hpp"
#include "amrt/error.hpp"

using namespace amrt;

TEST_CASE("default config roundtrips through JSON") {
  const AppConfig d;
  const auto j = to_json(d);
  for (const char* block : {"tokenizer", "solver", "riemann", "train"}) CHECK(j.contains(block));
  const auto back = app_config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(back.solver == d.solver);
  CHECK(back.train == d.train);
}

TEST_CASE("partial blocks keep defaults") {
  const auto c = app_config_from_json({{"tokenizer", {{"max_depth", 5}}}, {"solver", {{"d_model", 32}}}});
  CHECK(c.tokenizer.max_depth == 5);
  CHECK(c.tokenizer.k == 2);
  CHECK(c.solver.d_model == 32);
  CHECK(c.solver.n_heads == 4);
  CHECK(c.riemann.resolution == 128);
}

TEST_CASE("bad documents are config errors") {
  CHECK_THROWS_AS(app_config_from_json({{"tokeniser", nlohmann::json::object()}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json({{"solver", {{"heads", 2}}}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json({{"riemann", {{"cfl", "fast"}}}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json({{"train", {{"batch", 0}}}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json(nlohmann::json::array()), ConfigError);

  const auto path = std::filesystem::temp_directory_path() / "amrt_test_config.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_app_config(path), ConfigError);
  {
    std::ofstream out(path);
    out << R"({"train": {"optimizer": "adam", "lr_scale": 0.1}})";
  }
  const auto c = load_app_config(path);
  CHECK(c.train.optimizer == solver::Optimizer::adam);
  CHECK(c.train.lr_scale == 0.1);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_app_config("/nonexistent/amrt.json"), Error);
}
