// amrtok: dataset generation, tokenization, training and evaluation.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include "amrt/checkpoint.hpp"
#include "amrt/config.hpp"
#include "amrt/error.hpp"
#include "amrt/metrics.hpp"
#include "amrt/parallel.hpp"
#include "amrt/render.hpp"
#include "amrt/riemann.hpp"
#include "amrt/tokenizer.hpp"
#include "amrt/train.hpp"

namespace fs = std::filesystem;
using namespace amrt;

namespace {

AppConfig config_or_default(const std::string& path) {
  return path.empty() ? AppConfig{} : load_app_config(path);
}

int cmd_gen(const fs::path& out_dir, const std::string& config_path,
            const std::optional<std::size_t>& cases, const std::optional<std::size_t>& res,
            const std::optional<std::size_t>& frames, const std::optional<double>& amplitude,
            const std::optional<std::uint64_t>& seed, const std::optional<double>& final_time) {
  riemann::RiemannConfig cfg = config_or_default(config_path).riemann;
  if (cases) cfg.cases = *cases;
  if (res) cfg.resolution = *res;
  if (frames) cfg.frames = *frames;
  if (amplitude) cfg.perturb_amplitude = *amplitude;
  if (seed) cfg.seed = *seed;
  if (final_time) cfg.final_time = *final_time;
  cfg.validate();
  fs::create_directories(out_dir);
  std::mutex log_mutex;
  riemann::simulate(cfg, [&](FrameSequence&& seq) {
    const fs::path path = out_dir / (seq.case_id + ".nsgrid");
    write_container(seq, path);
    std::lock_guard lock(log_mutex);
    std::cout << "gen case=" << seq.case_id << " frames=" << seq.frames.size()
              << " dt=" << seq.dt << " file=" << path.string() << "\n";
  });
  return 0;
}

int cmd_tokenize(const fs::path& in, std::size_t frame, const std::string& config_path,
                 const fs::path& out) {
  const AppConfig app = config_or_default(config_path);
  const FrameSequence seq = read_container(in);
  if (frame >= seq.frames.size())
    throw ShapeError("frame " + std::to_string(frame) + " out of range, file has " +
                     std::to_string(seq.frames.size()));
  const auto& tok = app.tokenizer;
  const tokenizer::TokenSet tokens =
      frame > 0 && tok.use_virtual_velocity
          ? tokenizer::tokenize_pair(seq.frames[frame - 1], seq.frames[frame], tok)
          : tokenizer::tokenize(seq.frames[frame], tok);
  nlohmann::json meta = {{"tokenizer", tokenizer::to_json(tok)},
                         {"source", in.string()},
                         {"frame", frame}};
  tokenizer::write_tokens(tokens, out, meta);
  const auto cost = metrics::token_stats(
      tokens, metrics::regular_token_count(tokens.height, tokens.width, tokens.k), app.solver);
  std::cout << "tokenize tokens=" << tokens.tokens.size() << " stored_cells=" << cost.stored_cells
            << " reduction=" << cost.reduction_vs_regular << " file=" << out.string() << "\n";
  return 0;
}

int cmd_detok(const fs::path& in, const fs::path& out, const std::optional<double>& fill) {
  const tokenizer::TokenSet tokens = tokenizer::read_tokens(in);
  FrameSequence seq;
  seq.frames.push_back(tokenizer::detokenize(tokens, fill));
  seq.case_id = in.stem().string();
  seq.settings = {{"source", in.string()}};
  write_container(seq, out);
  std::cout << "detok height=" << tokens.height << " width=" << tokens.width
            << " file=" << out.string() << "\n";
  return 0;
}

int cmd_render(const fs::path& in, const fs::path& out, const std::string& channel,
               std::size_t scale) {
  const tokenizer::TokenSet tokens = tokenizer::read_tokens(in);
  const std::string ch = channel.empty() ? tokens.channels.back() : channel;
  const Image img = render_tokens(tokens, ch, scale);
  write_ppm(img, out);
  std::cout << "render channel=" << ch << " width=" << img.width << " height=" << img.height
            << " file=" << out.string() << "\n";
  return 0;
}

void fit_channels(solver::SolverConfig& cfg, const std::vector<solver::Case>& data) {
  if (!data.empty() && !data.front().empty()) cfg.c = data.front().front().channel_count();
  cfg.validate();
}

int cmd_train(const fs::path& data_dir, const std::string& config_path,
              const std::optional<std::size_t>& epochs, const std::optional<std::size_t>& steps,
              const std::optional<std::uint64_t>& seed, std::size_t downsample,
              const fs::path& out) {
  AppConfig app = config_or_default(config_path);
  if (epochs) app.train.epochs = *epochs;
  if (steps) app.train.max_steps = *steps;
  if (seed) app.train.seed = *seed;
  app.train.validate();
  const auto data = solver::load_dataset(data_dir, downsample);
  app.solver.k = app.tokenizer.k;
  fit_channels(app.solver, data);
  const auto result = solver::train(data, app.solver, app.tokenizer, app.train);
  for (const auto& e : result.log.epochs)
    std::cout << "train epoch=" << e.epoch << " steps=" << e.steps << " loss=" << e.mean_loss
              << "\n";
  if (result.log.zero_label_samples)
    std::cout << "warning zero_label_samples=" << result.log.zero_label_samples << "\n";
  solver::write_params(result.params, out);
  std::cout << "train params=" << result.params.parameter_count() << " file=" << out.string()
            << "\n";
  return 0;
}

int cmd_eval(const fs::path& model, const fs::path& data_dir, const std::string& config_path,
             std::size_t downsample, const std::string& json_out) {
  const AppConfig app = config_or_default(config_path);
  const auto params = solver::read_params(model);
  const auto data = solver::load_dataset(data_dir, downsample);
  const auto report = solver::evaluate(params, data, app.tokenizer, app.train.frame_stride);
  for (const auto& c : report.cases)
    std::cout << "eval case=" << c.case_index << " samples=" << c.samples
              << " nmse=" << c.model.nmse << " mse=" << c.model.mse << " mae=" << c.model.mae
              << " identity_nmse=" << c.identity.nmse << " floor_nmse=" << c.floor.nmse << "\n";
  std::cout << "eval all samples=" << report.samples << " tokens=" << report.mean_tokens
            << " nmse=" << report.model.nmse << " mse=" << report.model.mse
            << " mae=" << report.model.mae << " identity_nmse=" << report.identity.nmse
            << " floor_nmse=" << report.floor.nmse << "\n";
  if (!json_out.empty()) {
    std::ofstream out(json_out);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + json_out);
    out << solver::to_json(report).dump(2) << "\n";
  }
  return 0;
}

int cmd_bench(const fs::path& data_dir, const std::string& config_path, const fs::path& csv) {
  const AppConfig app = config_or_default(config_path);
  const auto data = solver::load_dataset(data_dir);
  std::ofstream out(csv);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot open " + csv.string());
  out << "case,frame,N,stored_cells,total_flops,reduction,grad,vort,mom,kh,percentile\n";
  double sum = 0.0;
  std::size_t rows = 0;
  for (std::size_t c = 0; c < data.size(); ++c) {
    for (std::size_t f = 0; f < data[c].size(); ++f) {
      const auto tokens = f > 0 && app.tokenizer.use_virtual_velocity
                              ? tokenizer::tokenize_pair(data[c][f - 1], data[c][f], app.tokenizer)
                              : tokenizer::tokenize(data[c][f], app.tokenizer);
      const auto cost = metrics::token_stats(
          tokens, metrics::regular_token_count(tokens.height, tokens.width, tokens.k), app.solver);
      const auto& cc = tokens.stats.clause_counts;
      out << c << ',' << f << ',' << cost.token_count << ',' << cost.stored_cells << ','
          << cost.total_flops << ',' << cost.reduction_vs_regular << ',' << cc[0] << ',' << cc[1]
          << ',' << cc[2] << ',' << cc[3] << ',' << cc[4] << "\n";
      sum += static_cast<double>(cost.token_count);
      ++rows;
    }
  }
  std::cout << "bench frames=" << rows << " mean_tokens=" << (rows ? sum / rows : 0.0)
            << " file=" << csv.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-mesh tokenizer and attention solver for 2D flow fields"};
  app.require_subcommand(1);

  std::string config_path;

  // gen
  auto* gen = app.add_subcommand("gen", "simulate four-quadrant Riemann cases");
  fs::path gen_out;
  std::optional<std::size_t> gen_cases, gen_res, gen_frames;
  std::optional<double> gen_amp, gen_final;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--config", config_path, "JSON config (riemann block)");
  gen->add_option("--cases", gen_cases);
  gen->add_option("--res", gen_res);
  gen->add_option("--frames", gen_frames);
  gen->add_option("--amplitude", gen_amp);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--final-time", gen_final);

  // tokenize
  auto* tok = app.add_subcommand("tokenize", "tokenize one frame of a container");
  fs::path tok_in, tok_out;
  std::size_t tok_frame = 0;
  tok->add_option("--in", tok_in)->required();
  tok->add_option("--frame", tok_frame);
  tok->add_option("--config", config_path);
  tok->add_option("--out", tok_out)->required();

  // detok
  auto* detok = app.add_subcommand("detok", "paint tokens back onto the grid");
  fs::path detok_in, detok_out;
  std::optional<double> detok_fill;
  detok->add_option("--in", detok_in)->required();
  detok->add_option("--out", detok_out)->required();
  detok->add_option("--fill", detok_fill, "value for pixels no token covers (lossy mode)");

  // render
  auto* render = app.add_subcommand("render", "heatmap with cell boundaries as PPM");
  fs::path render_in, render_out;
  std::string render_channel;
  std::size_t render_scale = 4;
  render->add_option("--in", render_in)->required();
  render->add_option("--out", render_out)->required();
  render->add_option("--channel", render_channel, "defaults to the last channel");
  render->add_option("--scale", render_scale);

  // train
  auto* train = app.add_subcommand("train", "train the attention solver");
  fs::path train_data, train_out;
  std::optional<std::size_t> train_epochs, train_steps;
  std::optional<std::uint64_t> train_seed;
  std::size_t train_down = 1;
  train->add_option("--data", train_data)->required();
  train->add_option("--config", config_path);
  train->add_option("--epochs", train_epochs);
  train->add_option("--steps", train_steps);
  train->add_option("--seed", train_seed);
  train->add_option("--downsample", train_down, "block-average frames by this factor");
  train->add_option("--out", train_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the regular grid");
  fs::path eval_model, eval_data;
  std::size_t eval_down = 1;
  std::string eval_json;
  eval->add_option("--model", eval_model)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--config", config_path);
  eval->add_option("--downsample", eval_down);
  eval->add_option("--json", eval_json, "write the full report here");

  // bench
  auto* bench = app.add_subcommand("bench", "per-frame token counts and FLOPs as CSV");
  fs::path bench_data, bench_csv;
  bench->add_option("--data", bench_data)->required();
  bench->add_option("--config", config_path);
  bench->add_option("--csv", bench_csv)->required();

  // config
  auto* config = app.add_subcommand("config", "configuration helpers");
  bool print_default = false;
  config->add_flag("--print-default", print_default, "print the default config as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    configure_threads_from_env();
    if (*gen) return cmd_gen(gen_out, config_path, gen_cases, gen_res, gen_frames, gen_amp, gen_seed, gen_final);
    if (*tok) return cmd_tokenize(tok_in, tok_frame, config_path, tok_out);
    if (*detok) return cmd_detok(detok_in, detok_out, detok_fill);
    if (*render) return cmd_render(render_in, render_out, render_channel, render_scale);
    if (*train) return cmd_train(train_data, config_path, train_epochs, train_steps, train_seed, train_down, train_out);
    if (*eval) return cmd_eval(eval_model, eval_data, config_path, eval_down, eval_json);
    if (*bench) return cmd_bench(bench_data, config_path, bench_csv);
    if (*config) {
      if (!print_default) {
        std::cerr << "config: nothing to do (try --print-default)\n";
        return 1;
      }
      std::cout << to_json(AppConfig{}).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
