#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "amrt/error.hpp"
#include "amrt/riemann.hpp"
#include "amrt/tokenizer.hpp"
#include "support.hpp"

using namespace amrt;
using namespace amrt::tokenizer;

namespace {

using RegionKey = std::tuple<std::size_t, std::size_t, std::size_t>;

std::set<RegionKey> refined_set(const TokenSet& t) {
  std::set<RegionKey> s;
  for (const auto& r : refined_regions(t)) s.insert({r.depth, r.row0, r.col0});
  return s;
}

TokenizerConfig config(std::size_t max_depth, pruning::Thresholds thr = pruning::default_thresholds()) {
  TokenizerConfig cfg;
  cfg.max_depth = max_depth;
  cfg.thresholds = thr;
  return cfg;
}

const pruning::Thresholds kZero{0, 0, 0, 0, 0.0};

std::size_t log2_size(std::size_t n) {
  std::size_t e = 0;
  while ((std::size_t{1} << e) < n) ++e;
  return e;
}

double mse(const Field& a, const Field& b) {
  double s = 0.0;
  for (std::size_t n = 0; n < a.data().size(); ++n) s += (a.data()[n] - b.data()[n]) * (a.data()[n] - b.data()[n]);
  return s / static_cast<double>(a.data().size());
}

// Gaussian bump in u centered at column `cx` (pixels), v small and constant.
Field bump(std::size_t n, double cx, double cy) {
  Field f(n, n, {"u", "v"});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = static_cast<double>(j) - cx, dy = static_cast<double>(i) - cy;
      f.at(i, j, 0) = std::exp(-(dx * dx + dy * dy) / 8.0);
      f.at(i, j, 1) = 0.01;
    }
  return f;
}

const Field& shock_frame() {
  static const Field f = [] {
    riemann::RiemannConfig cfg;
    cfg.frames = 2;
    return riemann::simulate_case(cfg, 0).frames.back();
  }();
  return f;
}

// Every invariant of a complete-mode tree.
void check_tree(const TokenSet& t, const TokenizerConfig& cfg) {
  const std::size_t kk = cfg.k * cfg.k;
  for (std::size_t n = 0; n + 1 < t.tokens.size(); ++n) {
    const auto& a = t.tokens[n];
    const auto& b = t.tokens[n + 1];
    CHECK(std::tie(a.parent_depth, a.parent_row0, a.parent_col0) <
          std::tie(b.parent_depth, b.parent_row0, b.parent_col0));
  }
  std::set<RegionKey> stored;
  for (const auto& tok : t.tokens)
    for (std::size_t s = 0; s < kk; ++s) {
      const Region r = tok.cell_region(s, t.height, t.width, cfg.k);
      stored.insert({r.depth, r.row0, r.col0});
    }
  std::vector<int> cover(t.height * t.width, 0);
  for (const auto& tok : t.tokens) {
    REQUIRE(tok.cells.size() == kk);
    REQUIRE(tok.valid.size() == kk);
    const Region parent = tok.parent_region(t.height, t.width, cfg.k);
    std::size_t area = 0;
    for (std::size_t s = 0; s < kk; ++s) {
      CHECK(tok.valid[s] == 1);
      CHECK(tok.cells[s].depth == tok.parent_depth + 1);
      const Region r = tok.cell_region(s, t.height, t.width, cfg.k);
      CHECK(parent.contains(r));
      area += r.area();
      const auto [cx, cy] = r.center(t.height, t.width);
      CHECK(tok.cells[s].cx == cx);
      CHECK(tok.cells[s].cy == cy);
      for (std::size_t i = r.row0; i < r.row0 + r.rows; ++i)
        for (std::size_t j = r.col0; j < r.col0 + r.cols; ++j) ++cover[i * t.width + j];
    }
    CHECK(area == parent.area());
    // Nesting: parents below min depth are implicit; others are stored cells.
    if (tok.parent_depth >= cfg.min_depth)
      CHECK(stored.count({parent.depth, parent.row0, parent.col0}) == 1);
  }
  for (int c : cover) CHECK(c >= 1);
}

// Recomputes each stored parent's decision from scratch with the level scope.
void check_parents_passed(const Field& f, const TokenSet& t, const TokenizerConfig& cfg) {
  const auto planes = pruning::flow_planes(f);
  const auto ref = pruning::global_ref(planes);
  for (const auto& tok : t.tokens) {
    if (tok.parent_depth < cfg.min_depth) continue;
    const auto level = pruning::level_props(planes, cfg.k, tok.parent_depth);
    std::vector<double> g;
    for (const auto& c : level) g.push_back(c.grad);
    const std::size_t n = std::size_t{1} << tok.parent_depth;
    const std::size_t side = t.height / n;
    const auto& p = level[(tok.parent_row0 / side) * n + tok.parent_col0 / side];
    CHECK(pruning::should_subdivide(p, ref, cfg.thresholds, g, cfg.criteria));
  }
}

}  // namespace

TEST_CASE("config validation and JSON mapping") {
  TokenizerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.k = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.min_depth = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.min_depth = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.thresholds.r_grad = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const nlohmann::json j = {{"k", 2},
                            {"min_depth", 2},
                            {"max_depth", 5},
                            {"mode", "lossy"},
                            {"t_grad", 0.5},
                            {"t_vort", 0.6},
                            {"t_mom", 0.7},
                            {"t_kh", 0.8},
                            {"r_grad", 0.1},
                            {"use_virtual_velocity", false},
                            {"percentile_scope", "candidates"},
                            {"criteria", {{"vort", false}}},
                            {"sampling", {{"grad", {0.2, 0.4}}}}};
  const auto c = tokenizer_config_from_json(j);
  CHECK(c.min_depth == 2);
  CHECK(c.max_depth == 5);
  CHECK(c.mode == Mode::lossy);
  CHECK(c.thresholds == pruning::Thresholds{0.5, 0.6, 0.7, 0.8, 0.1});
  CHECK_FALSE(c.use_virtual_velocity);
  CHECK(c.percentile_scope == PercentileScope::candidates);
  CHECK(c.criteria == pruning::CriteriaMask{true, false, true, true});
  CHECK(c.sampling.grad == pruning::Range{0.2, 0.4});
  CHECK(to_json(tokenizer_config_from_json(to_json(c))) == to_json(c));
  CHECK(tokenizer_config_from_json(nlohmann::json::object()).max_depth == 6);

  CHECK_THROWS_AS(tokenizer_config_from_json({{"max_dpeth", 3}}), ConfigError);
  CHECK_THROWS_AS(tokenizer_config_from_json({{"mode", "partial"}}), ConfigError);
  CHECK_THROWS_AS(tokenizer_config_from_json({{"criteria", {{"shear", true}}}}), ConfigError);
}

TEST_CASE("tokenize errors") {
  auto rng = make_engine(20);
  CHECK_THROWS_AS(tokenize(testing::random_field(rng, 24, 24), config(3)), ShapeError);
  CHECK_THROWS_AS(tokenize(testing::random_field(rng, 16, 32), config(3)), ShapeError);
  CHECK_THROWS_AS(tokenize(testing::random_field(rng, 16, 16), config(5)), ConfigError);
  CHECK_THROWS_AS(tokenize(testing::random_field(rng, 16, 16, {"p", "rho"}), config(3)), ChannelError);
  try {
    (void)tokenize(testing::random_field(rng, 16, 16, {"u", "p"}), config(3));
  } catch (const ChannelError& e) {
    CHECK(e.channel() == "v");
  }
}

TEST_CASE("uniform field without percentile gives one token") {
  const auto f = testing::velocity_field(16, 16, [](double, double) { return std::pair{0.3, 0.1}; });
  auto thr = pruning::default_thresholds();
  thr.r_grad = 0.0;
  const auto t = tokenize(f, config(4, thr));
  REQUIRE(t.tokens.size() == 1);
  CHECK(t.stored_cells() == 4);
  CHECK(t.tokens[0].parent_depth == 0);
  // Summing 64 copies of 0.1 is not exact.
  const Field back = detokenize(t);
  for (std::size_t n = 0; n < f.data().size(); ++n) CHECK(back.data()[n] == doctest::Approx(f.data()[n]).epsilon(1e-14));
  // With the tie rule every cell passes and the tree refines fully.
  const auto full = tokenize(f, config(4));
  CHECK(full.tokens.size() == 1 + 4 + 16 + 64);
}

TEST_CASE("full refinement token counts") {
  auto rng = make_engine(21);
  for (std::size_t e = 1; e <= 6; ++e)
    for (std::size_t s = 1; s <= e; ++s) {
      TokenizerConfig cfg = config(e, kZero);
      cfg.min_depth = s;
      const auto t = tokenize(testing::random_field(rng, 64, 64), cfg);
      std::size_t want = 0;
      for (std::size_t d = s; d <= e; ++d) want += std::size_t{1} << (2 * (d - 1));
      CHECK(t.tokens.size() == want);
      check_tree(t, cfg);
    }
  const auto t = tokenize(testing::random_field(rng, 64, 64), config(6, kZero));
  CHECK(t.tokens.size() == 1365);
  CHECK(t.stored_cells() == 4 * 1365);
}

TEST_CASE("k = 4 full refinement") {
  auto rng = make_engine(22);
  TokenizerConfig cfg = config(3, kZero);
  cfg.k = 4;
  const Field f = testing::random_field(rng, 64, 64);
  const auto t = tokenize(f, cfg);
  CHECK(t.tokens.size() == 1 + 16 + 256);
  check_tree(t, cfg);
  // Finest cells are 1 x 1 at depth 3.
  CHECK(detokenize(t) == f);
}

TEST_CASE("aggregate_cell") {
  auto rng = make_engine(23);
  const Field f = testing::random_field(rng, 4, 4, {"u", "v", "p"});
  const auto one = aggregate_cell(f, Region{2, 1, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) CHECK(one.features[c] == f.at(1, 3, c));
  CHECK(one.depth == 2);

  const auto all = aggregate_cell(f, Region{0, 0, 0, 4, 4});
  for (std::size_t c = 0; c < 3; ++c) {
    double mu = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) mu += f.at(i, j, c);
    CHECK(all.features[c] == doctest::Approx(mu / 16).epsilon(1e-14));
  }
  CHECK(all.cx == 0.5);
  CHECK(all.cy == 0.5);

  const Field two(2, 2, {"u", "v"});
  const auto tl = aggregate_cell(two, Region{1, 0, 0, 1, 1});
  CHECK(tl.cx == 0.25);
  CHECK(tl.cy == 0.25);
  CHECK_THROWS_AS(aggregate_cell(two, Region{1, 1, 1, 2, 2}), ShapeError);
}

TEST_CASE("lossless roundtrip at full refinement") {
  auto rng = make_engine(24);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = std::size_t{8} << (rng() % 4);
    const Field f = testing::random_field(rng, n, n);
    const auto t = tokenize(f, config(log2_size(n), kZero));
    CHECK(detokenize(t) == f);
  }
}

TEST_CASE("random trees satisfy ordering, coverage, nesting and parent decisions") {
  auto rng = make_engine(25);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = std::size_t{8} << (rng() % 4);
    const Field f = testing::random_field(rng, n, n, {"u", "v", "p"});
    TokenizerConfig cfg = config(std::min<std::size_t>(log2_size(n), 5), pruning::sample_thresholds(rng));
    cfg.min_depth = 1 + rng() % cfg.max_depth;
    const auto t = tokenize(f, cfg);
    check_tree(t, cfg);
    check_parents_passed(f, t, cfg);
    CHECK(t == tokenize(f, cfg));
    const Field back = detokenize(t);
    CHECK(back.channels() == f.channels());

    cfg.percentile_scope = PercentileScope::candidates;
    check_tree(tokenize(f, cfg), cfg);
  }
}

TEST_CASE("detokenize paints deepest cells last") {
  // A hand-built tree: depth-1 token of 1s, one depth-2 token of 5s in the top-left quadrant.
  TokenSet t;
  t.height = t.width = 4;
  t.channels = {"u"};
  Token coarse{0, 0, 0, {}, {1, 1, 1, 1}};
  Token fine{1, 0, 0, {}, {1, 1, 1, 1}};
  for (int s = 0; s < 4; ++s) {
    coarse.cells.push_back({{1.0}, 1, 0, 0});
    fine.cells.push_back({{5.0}, 2, 0, 0});
  }
  t.tokens = {fine, coarse};
  const Field f = detokenize(t);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(f.at(i, j, 0) == ((i < 2 && j < 2) ? 5.0 : 1.0));
}

TEST_CASE("lossy mode pads invalid slots and reports coverage") {
  const Field f = bump(32, 8.0, 8.0);
  TokenizerConfig cfg = config(5);
  cfg.mode = Mode::lossy;
  cfg.thresholds.r_grad = 0.0;
  const auto t = tokenize(f, cfg);
  REQUIRE_FALSE(t.tokens.empty());
  std::size_t invalid = 0;
  for (const auto& tok : t.tokens)
    for (std::size_t s = 0; s < 4; ++s)
      if (!tok.valid[s]) {
        ++invalid;
        for (double v : tok.cells[s].features) CHECK(v == 0.0);
      }
  CHECK(invalid > 0);
  try {
    (void)detokenize(t);
    FAIL("expected coverage error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cover only") != std::string::npos);
  }
  const Field filled = detokenize(t, -7.0);
  std::size_t fill_hits = 0;
  for (double v : filled.data()) fill_hits += v == -7.0;
  CHECK(fill_hits > 0);
  CHECK(fill_hits < filled.data().size());

  // Complete mode on the same field covers everything.
  cfg.mode = Mode::complete;
  CHECK_NOTHROW(detokenize(tokenize(f, cfg)));
}

TEST_CASE("virtual velocity") {
  auto rng = make_engine(26);
  Field prev = testing::random_field(rng, 8, 8, {"u", "v", "p"});
  CHECK(virtual_velocity(prev, prev) == prev);

  Field cur = prev;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      cur.at(i, j, 0) += 0.25;
      cur.at(i, j, 1) -= 0.5;
      cur.at(i, j, 2) = 9.0;
    }
  const Field vv = virtual_velocity(cur, prev);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(vv.at(i, j, 0) == doctest::Approx(cur.at(i, j, 0) + 0.25).epsilon(1e-14));
      CHECK(vv.at(i, j, 1) == doctest::Approx(cur.at(i, j, 1) - 0.5).epsilon(1e-14));
      CHECK(vv.at(i, j, 2) == 9.0);
    }
  CHECK_THROWS_AS(virtual_velocity(cur, testing::random_field(rng, 4, 4, {"u", "v", "p"})), ShapeError);

  // Translating bump: extrapolated peak sits one step further along x.
  const Field a = bump(32, 10.0, 16.0), b = bump(32, 11.0, 16.0);
  const Field v = virtual_velocity(b, a);
  std::size_t best = 0;
  for (std::size_t j = 0; j < 32; ++j)
    if (v.at(16, j, 0) > v.at(16, best, 0)) best = j;
  CHECK(best == 12);
}

TEST_CASE("tokenize_pair") {
  auto rng = make_engine(27);
  const Field f = testing::random_field(rng, 32, 32, {"u", "v"});
  CHECK(tokenize_pair(f, f, config(5)) == tokenize(f, config(5)));

  // Bump moving into a quiescent zone: the union refines ahead of it.
  auto thr = pruning::default_thresholds();
  thr.r_grad = 0.0;
  const Field prev = bump(64, 20.0, 32.0), cur = bump(64, 24.0, 32.0);
  const auto single = refined_set(tokenize(cur, config(6, thr)));
  const auto pair = refined_set(tokenize_pair(prev, cur, config(6, thr)));
  CHECK(std::includes(pair.begin(), pair.end(), single.begin(), single.end()));
  CHECK(pair.size() > single.size());
  // Features still come from the current frame.
  const auto tp = tokenize_pair(prev, cur, config(6, thr));
  CHECK(aggregate_like(tp, cur) == tp);

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = std::size_t{8} << (rng() % 3);
    const Field p = testing::random_field(rng, n, n, {"u", "v"});
    const Field c = testing::random_field(rng, n, n, {"u", "v"});
    const auto cfg = config(std::min<std::size_t>(log2_size(n), 4), pruning::sample_thresholds(rng));
    const auto s1 = refined_set(tokenize(c, cfg));
    const auto s2 = refined_set(tokenize_pair(p, c, cfg));
    CHECK(std::includes(s2.begin(), s2.end(), s1.begin(), s1.end()));
  }
}

TEST_CASE("aggregate_like reuses the tree") {
  auto rng = make_engine(28);
  const Field a = testing::random_field(rng, 16, 16, {"u", "v"});
  const Field b = testing::random_field(rng, 16, 16, {"u", "v"});
  const auto ta = tokenize(a, config(4));
  const auto tb = aggregate_like(ta, b);
  REQUIRE(tb.tokens.size() == ta.tokens.size());
  CHECK(refined_regions(tb) == refined_regions(ta));
  const auto& cell = tb.tokens.back().cells[0];
  const Region r = tb.tokens.back().cell_region(0, 16, 16, 2);
  CHECK(cell == aggregate_cell(b, r));
  CHECK_THROWS_AS(aggregate_like(ta, testing::random_field(rng, 8, 8, {"u", "v"})), ShapeError);
}

TEST_CASE("dense arrays roundtrip") {
  auto rng = make_engine(29);
  const Field f = testing::random_field(rng, 16, 16, {"u", "v", "p"});
  const auto t = tokenize(f, config(4));
  const auto a = to_arrays(t);
  CHECK(a.n == t.tokens.size());
  CHECK(a.k2 == 4);
  CHECK(a.width == 3 + 3);
  CHECK(a.cells.size() == a.n * 4 * 6);
  CHECK(a.parents.size() == a.n * 3);
  CHECK(a.valid.size() == a.n * 4);
  // Cell layout is [features, depth, cx, cy].
  const auto& c0 = t.tokens[0].cells[1];
  CHECK(a.cells[6 + 0] == c0.features[0]);
  CHECK(a.cells[6 + 3] == static_cast<double>(c0.depth));
  CHECK(a.cells[6 + 4] == c0.cx);
  CHECK(a.cells[6 + 5] == c0.cy);
  const auto back = from_arrays(a, 16, 16, 2, t.channels, t.mode);
  CHECK(back.tokens == t.tokens);

  auto broken = a;
  broken.cells.pop_back();
  CHECK_THROWS_AS(from_arrays(broken, 16, 16, 2, t.channels, t.mode), ShapeError);

  const auto uniform = testing::velocity_field(16, 16, [](double, double) { return std::pair{0.3, 0.1}; });
  auto thr = pruning::default_thresholds();
  thr.r_grad = 0.0;
  const auto u = to_arrays(tokenize(uniform, config(4, thr)));
  CHECK(u.n == 1);
  CHECK(u.k2 == 4);
  CHECK(u.width == 2 + 3);
}

TEST_CASE(".amrtok roundtrip and errors") {
  auto rng = make_engine(30);
  const Field f = testing::random_field(rng, 32, 32, {"u", "v", "p"});
  const auto t = tokenize(f, config(5));
  std::stringstream buf;
  write_tokens(t, buf);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "ATOK");
  CHECK(bytes.size() == 4 + 4 * 4 + 1 + t.tokens.size() * (1 + 8 + 4 * (1 + 4 * (2 + 3))));

  const auto back = read_tokens(buf, 32, 32, t.channels);
  REQUIRE(back.tokens.size() == t.tokens.size());
  for (std::size_t n = 0; n < t.tokens.size(); ++n) {
    const auto& x = t.tokens[n];
    const auto& y = back.tokens[n];
    CHECK(x.parent_depth == y.parent_depth);
    CHECK(x.parent_row0 == y.parent_row0);
    CHECK(x.parent_col0 == y.parent_col0);
    CHECK(x.valid == y.valid);
    for (std::size_t s = 0; s < 4; ++s) {
      CHECK(y.cells[s].depth == x.cells[s].depth);
      CHECK(y.cells[s].cx == static_cast<double>(static_cast<float>(x.cells[s].cx)));
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(y.cells[s].features[c] == static_cast<double>(static_cast<float>(x.cells[s].features[c])));
    }
  }
  std::stringstream again;
  write_tokens(back, again);
  CHECK(again.str() == bytes);

  const auto path = std::filesystem::temp_directory_path() / "amrt_test_tokens.amrtok";
  write_tokens(t, path, {{"tokenizer", to_json(config(5))}});
  const auto from_file = read_tokens(path);
  CHECK(from_file.height == 32);
  CHECK(from_file.channels == t.channels);
  CHECK(from_file.tokens.size() == t.tokens.size());
  std::filesystem::remove(path);
  std::filesystem::remove(sidecar_path(path));

  auto kind_of = [&](const std::string& b) {
    std::istringstream in(b);
    try {
      (void)read_tokens(in, 32, 32, t.channels);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("expected FormatError");
    return FormatError::Kind::io;
  };
  std::string bad = bytes;
  bad[1] = 'X';
  CHECK(kind_of(bad) == FormatError::Kind::bad_magic);
  bad = bytes;
  bad[4] = 9;
  CHECK(kind_of(bad) == FormatError::Kind::version_mismatch);
  CHECK(kind_of(bytes.substr(0, bytes.size() - 3)) == FormatError::Kind::truncated);
  std::istringstream wrong(bytes);
  CHECK_THROWS_AS(read_tokens(wrong, 32, 32, {"u", "v"}), FormatError);
}

TEST_CASE("shock frame: pruning fires and refinement sweep is monotone") {
  const Field& f = shock_frame();
  const auto t = tokenize(f, config(6));
  check_tree(t, config(6));
  CHECK(t.tokens.size() < 1365);
  CHECK(t.stored_cells() <= 128 * 128 * 7);
  // Regular k = 2 patch grid of a 128 x 128 field holds 64 * 64 tokens.
  CHECK(4096.0 / static_cast<double>(t.tokens.size()) >= 2.0);

  auto thr = pruning::default_thresholds();
  double last = mse(detokenize(tokenize(f, config(6, thr))), f);
  for (int step = 0; step < 3; ++step) {
    thr.t_grad /= 2;
    thr.t_vort /= 2;
    thr.t_mom /= 2;
    thr.t_kh /= 2;
    const double now = mse(detokenize(tokenize(f, config(6, thr))), f);
    CAPTURE(step);
    CHECK(now < last);
    last = now;
  }
}
