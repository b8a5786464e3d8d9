#include "amrt/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "amrt/error.hpp"
#include "amrt/pruning.hpp"
#include "amrt/random.hpp"

namespace amrt::solver {

void TrainOptions::validate() const {
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (frame_stride == 0) throw ConfigError("train.frame_stride must be positive");
  if (epochs == 0 && max_steps == 0) throw ConfigError("train needs epochs or max_steps");
  if (!(lr_scale > 0.0) || !std::isfinite(lr_scale))
    throw ConfigError("train.lr_scale must be positive");
}

nlohmann::json to_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},
          {"max_steps", o.max_steps},
          {"batch", o.batch},
          {"seed", o.seed},
          {"optimizer", o.optimizer == Optimizer::adam ? "adam" : "sgd"},
          {"lr_scale", o.lr_scale},
          {"frame_stride", o.frame_stride},
          {"sample_thresholds", o.sample_thresholds},
          {"zero_head", o.zero_head}};
}

TrainOptions train_options_from_json(const nlohmann::json& j) {
  TrainOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") o.epochs = value.get<std::size_t>();
    else if (key == "max_steps") o.max_steps = value.get<std::size_t>();
    else if (key == "batch") o.batch = value.get<std::size_t>();
    else if (key == "seed") o.seed = value.get<std::uint64_t>();
    else if (key == "optimizer") {
      const auto name = value.get<std::string>();
      if (name == "sgd") o.optimizer = Optimizer::sgd;
      else if (name == "adam") o.optimizer = Optimizer::adam;
      else throw ConfigError("train.optimizer must be sgd or adam, got " + name);
    } else if (key == "lr_scale") o.lr_scale = value.get<double>();
    else if (key == "frame_stride") o.frame_stride = value.get<std::size_t>();
    else if (key == "sample_thresholds") o.sample_thresholds = value.get<bool>();
    else if (key == "zero_head") o.zero_head = value.get<bool>();
    else throw ConfigError("unknown key train." + key);
  }
  o.validate();
  return o;
}

std::vector<SampleRef> sample_refs(const std::vector<Case>& data, std::size_t stride) {
  std::vector<SampleRef> refs;
  for (std::size_t c = 0; c < data.size(); ++c)
    for (std::size_t t = stride; t + stride < data[c].size(); ++t) refs.push_back({c, t});
  return refs;
}

Sample make_sample(const std::vector<Case>& data, const SampleRef& ref,
                   const tokenizer::TokenizerConfig& tok, std::size_t stride) {
  const Case& frames = data.at(ref.case_index);
  if (ref.frame < stride || ref.frame + stride >= frames.size())
    throw ShapeError("sample frame " + std::to_string(ref.frame) + " has no neighbours at stride " +
                     std::to_string(stride));
  Sample s;
  s.input = tokenizer::tokenize_pair(frames[ref.frame - stride], frames[ref.frame], tok);
  s.label = tokenizer::aggregate_like(s.input, frames[ref.frame + stride]);
  return s;
}

SampleGrad sample_gradient(const SolverParams& params, const Sample& sample) {
  Graph g = forward_graph(params, sample.input, true);
  const Tape::Id loss = g.tape.nmse(g.output, token_features(sample.label));
  g.tape.backward(loss);
  SampleGrad out;
  out.loss = g.tape.value(loss).values[0];
  out.zero_label = g.tape.zero_label_fallback();
  out.grads.reserve(g.params.size());
  for (Tape::Id id : g.params) {
    const Matrix& gr = g.tape.grad(id);
    const Matrix& v = g.tape.value(id);
    out.grads.push_back(gr.size() == v.size() ? gr : Matrix(v.rows, v.cols));
  }
  return out;
}

namespace {

void check_data(const std::vector<Case>& data, const SolverConfig& cfg,
                const tokenizer::TokenizerConfig& tok) {
  if (tok.mode != tokenizer::Mode::complete)
    throw ConfigError("training needs complete-mode tokens");
  if (tok.k != cfg.k)
    throw ConfigError("tokenizer k=" + std::to_string(tok.k) + " but solver k=" +
                      std::to_string(cfg.k));
  for (const auto& frames : data)
    for (const auto& f : frames)
      if (f.channel_count() != cfg.c)
        throw ConfigError("data has " + std::to_string(f.channel_count()) +
                          " channels but solver c=" + std::to_string(cfg.c));
}

}  // namespace

TrainResult train(const std::vector<Case>& data, const SolverConfig& cfg,
                  const tokenizer::TokenizerConfig& tok, const TrainOptions& opts) {
  SolverParams params = init_params(cfg, opts.seed);
  if (opts.zero_head) {
    std::fill(params.head_w.values.begin(), params.head_w.values.end(), 0.0);
    std::fill(params.head_b.values.begin(), params.head_b.values.end(), 0.0);
  }
  return train(data, std::move(params), tok, opts);
}

TrainResult train(const std::vector<Case>& data, SolverParams params,
                  const tokenizer::TokenizerConfig& tok, const TrainOptions& opts) {
  opts.validate();
  tok.validate();
  check_data(data, params.cfg, tok);
  const auto refs = sample_refs(data, opts.frame_stride);
  if (refs.empty())
    throw ShapeError("dataset too short: need at least " + std::to_string(2 * opts.frame_stride + 1) +
                     " frames per case");

  const std::size_t per_epoch = (refs.size() + opts.batch - 1) / opts.batch;
  const std::size_t total = opts.max_steps ? opts.max_steps : opts.epochs * per_epoch;

  auto rng = make_engine(opts.seed, 0x7a11);
  std::vector<std::size_t> order(refs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  std::vector<Matrix*> slots;
  params.for_each([&](Matrix& m) { slots.push_back(&m); });
  std::vector<Matrix> m1, m2;
  if (opts.optimizer == Optimizer::adam) {
    for (Matrix* p : slots) {
      m1.emplace_back(p->rows, p->cols);
      m2.emplace_back(p->rows, p->cols);
    }
  }

  TrainLog log;
  double epoch_sum = 0.0;
  std::size_t epoch_steps = 0;

  for (std::size_t step = 1; step <= total; ++step) {
    // Draw the batch and its thresholds serially so the stream does not
    // depend on the thread count.
    std::vector<std::size_t> picks(opts.batch);
    std::vector<tokenizer::TokenizerConfig> toks(opts.batch, tok);
    for (std::size_t b = 0; b < opts.batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t n = order.size(); n > 1; --n)
          std::swap(order[n - 1], order[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))]);
        cursor = 0;
      }
      picks[b] = order[cursor++];
      if (opts.sample_thresholds) {
        const double r_grad = tok.thresholds.r_grad;
        toks[b].thresholds = pruning::sample_thresholds(rng, tok.sampling);
        toks[b].thresholds.r_grad = r_grad;
      }
    }

    std::vector<SampleGrad> results(opts.batch);
    std::exception_ptr failure;
    const auto batch = static_cast<std::ptrdiff_t>(opts.batch);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      try {
        const auto bi = static_cast<std::size_t>(b);
        const Sample s = make_sample(data, refs[picks[bi]], toks[bi], opts.frame_stride);
        results[bi] = sample_gradient(params, s);
      } catch (...) {
#pragma omp critical(amrt_train_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);

    double loss = 0.0;
    for (const auto& r : results) {
      loss += r.loss;
      log.zero_label_samples += r.zero_label ? 1 : 0;
    }
    loss /= static_cast<double>(opts.batch);
    if (!std::isfinite(loss))
      throw Error("non-finite loss at step " + std::to_string(step) + " (case " +
                  std::to_string(refs[picks[0]].case_index) + ", frame " +
                  std::to_string(refs[picks[0]].frame) + ")");

    const double lr = opts.lr_scale * lr_schedule(step, params.cfg);
    const double inv_b = 1.0 / static_cast<double>(opts.batch);
    for (std::size_t p = 0; p < slots.size(); ++p) {
      auto& w = slots[p]->values;
      for (std::size_t n = 0; n < w.size(); ++n) {
        double g = 0.0;
        for (const auto& r : results) g += r.grads[p].values[n];
        g *= inv_b;
        if (opts.optimizer == Optimizer::sgd) {
          w[n] -= lr * g;
        } else {
          constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
          double& m = m1[p].values[n];
          double& v = m2[p].values[n];
          m = b1 * m + (1.0 - b1) * g;
          v = b2 * v + (1.0 - b2) * g * g;
          const double mh = m / (1.0 - std::pow(b1, static_cast<double>(step)));
          const double vh = v / (1.0 - std::pow(b2, static_cast<double>(step)));
          w[n] -= lr * mh / (std::sqrt(vh) + eps);
        }
      }
    }

    log.step_loss.push_back(loss);
    epoch_sum += loss;
    ++epoch_steps;
    if (epoch_steps == per_epoch || step == total) {
      log.epochs.push_back({log.epochs.size() + 1, epoch_steps, epoch_sum / static_cast<double>(epoch_steps)});
      epoch_sum = 0.0;
      epoch_steps = 0;
    }
  }
  return {std::move(params), std::move(log)};
}

namespace {

Metrics measure(const Field& pred, const Field& truth) {
  return {nmse(pred.data(), truth.data()), mse(pred.data(), truth.data()),
          mae(pred.data(), truth.data())};
}

void accumulate(Metrics& into, const Metrics& m) {
  into.nmse += m.nmse;
  into.mse += m.mse;
  into.mae += m.mae;
}

void divide(Metrics& m, std::size_t n) {
  if (n == 0) return;
  const double s = 1.0 / static_cast<double>(n);
  m.nmse *= s;
  m.mse *= s;
  m.mae *= s;
}

// Residual outputs are increments: paint them and add the current frame.
Field to_grid(const tokenizer::TokenSet& tokens, const Matrix& features, const Field& current,
              bool residual) {
  if (!residual) return tokenizer::detokenize(with_features(tokens, features));
  Matrix delta = features;
  const Matrix base = token_features(tokens);
  for (std::size_t n = 0; n < delta.size(); ++n) delta.values[n] -= base.values[n];
  Field out = tokenizer::detokenize(with_features(tokens, delta));
  auto d = out.data();
  const auto c = current.data();
  for (std::size_t n = 0; n < d.size(); ++n) d[n] += c[n];
  return out;
}

}  // namespace

EvalReport evaluate(const SolverParams& params, const std::vector<Case>& data,
                    const tokenizer::TokenizerConfig& tok, std::size_t frame_stride) {
  if (frame_stride == 0) throw ConfigError("frame_stride must be positive");
  if (tok.mode != tokenizer::Mode::complete)
    throw ConfigError("evaluation needs complete-mode tokens");
  check_data(data, params.cfg, tok);
  const auto refs = sample_refs(data, frame_stride);
  if (refs.empty()) throw ShapeError("dataset too short for evaluation");

  struct Row {
    Metrics model, identity, floor;
    std::size_t tokens = 0;
  };
  std::vector<Row> rows(refs.size());
  std::exception_ptr failure;
  const auto n_refs = static_cast<std::ptrdiff_t>(refs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < n_refs; ++r) {
    try {
      const auto ri = static_cast<std::size_t>(r);
      const SampleRef& ref = refs[ri];
      const Case& frames = data[ref.case_index];
      const Field& current = frames[ref.frame];
      const Field& next = frames[ref.frame + frame_stride];
      const Sample s = make_sample(data, ref, tok, frame_stride);
      const bool residual = params.cfg.residual;
      rows[ri].model = measure(to_grid(s.input, forward(params, s.input), current, residual), next);
      rows[ri].identity = measure(current, next);
      rows[ri].floor = measure(to_grid(s.input, token_features(s.label), current, residual), next);
      rows[ri].tokens = s.input.tokens.size();
    } catch (...) {
#pragma omp critical(amrt_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport report;
  report.cases.resize(data.size());
  for (std::size_t c = 0; c < data.size(); ++c) report.cases[c].case_index = c;
  double tokens = 0.0;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    CaseReport& cr = report.cases[refs[r].case_index];
    ++cr.samples;
    accumulate(cr.model, rows[r].model);
    accumulate(cr.identity, rows[r].identity);
    accumulate(cr.floor, rows[r].floor);
    accumulate(report.model, rows[r].model);
    accumulate(report.identity, rows[r].identity);
    accumulate(report.floor, rows[r].floor);
    tokens += static_cast<double>(rows[r].tokens);
  }
  for (auto& cr : report.cases) {
    divide(cr.model, cr.samples);
    divide(cr.identity, cr.samples);
    divide(cr.floor, cr.samples);
  }
  report.samples = refs.size();
  divide(report.model, report.samples);
  divide(report.identity, report.samples);
  divide(report.floor, report.samples);
  report.mean_tokens = tokens / static_cast<double>(report.samples);
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  auto metrics = [](const Metrics& m) {
    return nlohmann::json{{"nmse", m.nmse}, {"mse", m.mse}, {"mae", m.mae}};
  };
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases)
    cases.push_back({{"case", c.case_index},
                     {"samples", c.samples},
                     {"model", metrics(c.model)},
                     {"identity", metrics(c.identity)},
                     {"floor", metrics(c.floor)}});
  return {{"samples", r.samples},
          {"mean_tokens", r.mean_tokens},
          {"model", metrics(r.model)},
          {"identity", metrics(r.identity)},
          {"floor", metrics(r.floor)},
          {"cases", cases}};
}

std::vector<Case> load_dataset(const std::filesystem::path& dir, std::size_t downsample) {
  if (!std::filesystem::is_directory(dir))
    throw FormatError(FormatError::Kind::io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".nsgrid") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError(FormatError::Kind::io, "no .nsgrid files in " + dir.string());
  std::vector<Case> data;
  for (const auto& f : files) {
    FrameSequence seq = read_container(f);
    if (downsample > 1)
      for (auto& frame : seq.frames) frame = downsample_mean(frame, downsample);
    data.push_back(std::move(seq.frames));
  }
  return data;
}

Case advection_case(std::size_t size, std::size_t frames, std::uint64_t seed) {
  if (size == 0 || frames == 0) throw ShapeError("advection case needs a nonempty grid");
  auto rng = make_engine(seed, 0xadec);
  const double x0 = uniform01(rng);
  const double y0 = uniform(rng, 0.3, 0.7);
  const double sigma = 0.1;
  const double n = static_cast<double>(size);
  Case out;
  for (std::size_t t = 0; t < frames; ++t) {
    Field f(size, size, {"u", "v"});
    const double cx = x0 + static_cast<double>(t) / n;
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const auto [x, y] = cell_center(i, j, size, size);
        double dx = x - cx;
        dx -= std::round(dx);
        const double dy = y - y0;
        const double b = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        f.at(i, j, 0) = b;
        f.at(i, j, 1) = 0.5 * b;
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace amrt::solver
