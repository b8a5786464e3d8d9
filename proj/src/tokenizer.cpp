#include "amrt/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "amrt/error.hpp"

namespace amrt::tokenizer {

namespace {

using pruning::CellProps;
using pruning::FlowPlanes;
using pruning::GlobalRef;

std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

// log_k(n) when n is an exact power of k, otherwise nullopt.
std::optional<std::size_t> exact_log(std::size_t n, std::size_t k) {
  std::size_t m = 0;
  std::size_t p = 1;
  while (p < n) {
    p *= k;
    ++m;
  }
  if (p != n) return std::nullopt;
  return m;
}

void check_field(const Field& field, const TokenizerConfig& cfg) {
  cfg.validate();
  if (!field.has_channel("u")) throw ChannelError("u");
  if (!field.has_channel("v")) throw ChannelError("v");
  const auto m = exact_log(field.height(), cfg.k);
  if (field.height() != field.width() || !m)
    throw ShapeError("field " + std::to_string(field.height()) + "x" +
                     std::to_string(field.width()) + " is not a square power of k=" +
                     std::to_string(cfg.k));
  if (cfg.max_depth > *m)
    throw ConfigError("max_depth " + std::to_string(cfg.max_depth) + " exceeds log_k(H) = " +
                      std::to_string(*m));
}

std::vector<Region> children(const Region& r, std::size_t k) {
  std::vector<Region> out;
  out.reserve(k * k);
  const std::size_t rows = r.rows / k;
  const std::size_t cols = r.cols / k;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      out.push_back({r.depth + 1, r.row0 + a * rows, r.col0 + b * cols, rows, cols});
  return out;
}

// Everything needed to evaluate refinement on one field.
struct Criteria {
  FlowPlanes planes;
  GlobalRef ref;
};

// Fired clauses for every candidate at one depth.
std::vector<std::uint8_t> evaluate_level(const Criteria& crit, const std::vector<Region>& cand,
                                         std::size_t depth, const TokenizerConfig& cfg) {
  const std::vector<CellProps> level = pruning::level_props(crit.planes, cfg.k, depth);
  const std::size_t n = ipow(cfg.k, depth);
  auto index = [&](const Region& r) { return (r.row0 / r.rows) * n + r.col0 / r.cols; };

  std::vector<double> grads;
  if (cfg.percentile_scope == PercentileScope::level) {
    grads.reserve(level.size());
    for (const auto& p : level) grads.push_back(p.grad);
  } else {
    grads.reserve(cand.size());
    for (const auto& r : cand) grads.push_back(level[index(r)].grad);
  }
  const double cut = pruning::top_fraction_cut(grads, cfg.thresholds.r_grad);

  std::vector<std::uint8_t> fired(cand.size());
  for (std::size_t c = 0; c < cand.size(); ++c)
    fired[c] = pruning::fired_clauses(level[index(cand[c])], crit.ref, cfg.thresholds, cut,
                                      cfg.criteria);
  return fired;
}

TokenSet tokenize_impl(const Field& field, const Field* virtual_field,
                       const TokenizerConfig& cfg) {
  check_field(field, cfg);
  std::vector<Criteria> criteria;
  {
    auto planes = pruning::flow_planes(field);
    auto ref = pruning::global_ref(planes);
    criteria.push_back({std::move(planes), ref});
  }
  if (virtual_field) {
    auto planes = pruning::flow_planes(*virtual_field);
    auto ref = pruning::global_ref(planes);
    criteria.push_back({std::move(planes), ref});
  }

  TokenSet out;
  out.height = field.height();
  out.width = field.width();
  out.k = cfg.k;
  out.mode = cfg.mode;
  out.channels = field.channels();
  const std::size_t kk = cfg.k * cfg.k;

  // Candidates at depth >= 1 come in runs of kk siblings sharing a parent.
  std::vector<Region> candidates{{0, 0, 0, field.height(), field.width()}};
  std::vector<Region> parents;

  for (std::size_t depth = 0; !candidates.empty(); ++depth) {
    std::vector<std::uint8_t> refine(candidates.size(), 0);
    std::vector<std::uint8_t> store(candidates.size(), 0);

    if (depth < cfg.min_depth) {
      std::fill(refine.begin(), refine.end(), 1);
    } else if (depth >= cfg.max_depth) {
      std::fill(store.begin(), store.end(), 1);
    } else {
      std::vector<std::uint8_t> fired(candidates.size(), 0);
      for (const auto& crit : criteria) {
        const auto f = evaluate_level(crit, candidates, depth, cfg);
        for (std::size_t c = 0; c < fired.size(); ++c) fired[c] |= f[c];
      }
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        for (std::size_t b = 0; b < out.stats.clause_counts.size(); ++b)
          if (fired[c] & (1u << b)) ++out.stats.clause_counts[b];
        refine[c] = fired[c] != 0;
        store[c] = cfg.mode == Mode::complete || refine[c];
      }
      out.stats.evaluated_cells += candidates.size();
    }

    if (depth >= 1) {
      for (std::size_t g = 0; g * kk < candidates.size(); ++g) {
        const std::size_t first = g * kk;
        const bool any = std::any_of(store.begin() + static_cast<std::ptrdiff_t>(first),
                                     store.begin() + static_cast<std::ptrdiff_t>(first + kk),
                                     [](std::uint8_t s) { return s != 0; });
        if (!any) continue;
        const Region& parent = parents[g];
        Token tok;
        tok.parent_depth = parent.depth;
        tok.parent_row0 = parent.row0;
        tok.parent_col0 = parent.col0;
        tok.cells.reserve(kk);
        tok.valid.reserve(kk);
        for (std::size_t s = 0; s < kk; ++s) {
          const Region& r = candidates[first + s];
          if (store[first + s]) {
            tok.cells.push_back(aggregate_cell(field, r));
            tok.valid.push_back(1);
          } else {
            // Padding slot keeps its geometry; features are zero.
            CellRecord pad{std::vector<double>(field.channel_count(), 0.0), r.depth, 0.0, 0.0};
            std::tie(pad.cx, pad.cy) = r.center(field.height(), field.width());
            tok.cells.push_back(std::move(pad));
            tok.valid.push_back(0);
          }
        }
        out.tokens.push_back(std::move(tok));
      }
    }

    std::vector<Region> next;
    std::vector<Region> next_parents;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (!refine[c]) continue;
      ++out.stats.subdivided_cells;
      next_parents.push_back(candidates[c]);
      const auto kids = children(candidates[c], cfg.k);
      next.insert(next.end(), kids.begin(), kids.end());
    }
    candidates = std::move(next);
    parents = std::move(next_parents);
  }

  std::sort(out.tokens.begin(), out.tokens.end(), [](const Token& a, const Token& b) {
    return std::tie(a.parent_depth, a.parent_row0, a.parent_col0) <
           std::tie(b.parent_depth, b.parent_row0, b.parent_col0);
  });
  return out;
}

}  // namespace

void TokenizerConfig::validate() const {
  if (k < 2) throw ConfigError("tokenizer.k must be >= 2");
  if (min_depth < 1 || min_depth > max_depth)
    throw ConfigError("tokenizer depths must satisfy 1 <= min_depth <= max_depth");
  for (double v : {thresholds.t_grad, thresholds.t_vort, thresholds.t_mom, thresholds.t_kh})
    if (!(v >= 0.0)) throw ConfigError("tokenizer thresholds must be nonnegative");
  if (!(thresholds.r_grad >= 0.0 && thresholds.r_grad <= 1.0))
    throw ConfigError("tokenizer.r_grad must lie in [0, 1]");
}

Region Token::parent_region(std::size_t height, std::size_t width, std::size_t k) const {
  const std::size_t scale = ipow(k, parent_depth);
  return {parent_depth, parent_row0, parent_col0, height / scale, width / scale};
}

Region Token::cell_region(std::size_t index, std::size_t height, std::size_t width,
                          std::size_t k) const {
  const Region p = parent_region(height, width, k);
  const std::size_t rows = p.rows / k;
  const std::size_t cols = p.cols / k;
  return {parent_depth + 1, p.row0 + (index / k) * rows, p.col0 + (index % k) * cols, rows, cols};
}

std::size_t TokenSet::stored_cells() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tokens)
    n += static_cast<std::size_t>(std::count(t.valid.begin(), t.valid.end(), 1));
  return n;
}

CellRecord aggregate_cell(const Field& field, const Region& r) {
  if (r.rows == 0 || r.cols == 0 || r.row0 + r.rows > field.height() ||
      r.col0 + r.cols > field.width())
    throw ShapeError("region outside field bounds");
  const std::size_t nc = field.channel_count();
  CellRecord rec{std::vector<double>(nc, 0.0), r.depth, 0.0, 0.0};
  for (std::size_t i = r.row0; i < r.row0 + r.rows; ++i)
    for (std::size_t j = r.col0; j < r.col0 + r.cols; ++j)
      for (std::size_t c = 0; c < nc; ++c) rec.features[c] += field.at(i, j, c);
  const double n = static_cast<double>(r.area());
  for (auto& f : rec.features) f /= n;
  std::tie(rec.cx, rec.cy) = r.center(field.height(), field.width());
  return rec;
}

TokenSet tokenize(const Field& field, const TokenizerConfig& cfg) {
  return tokenize_impl(field, nullptr, cfg);
}

TokenSet tokenize_pair(const Field& previous, const Field& current, const TokenizerConfig& cfg) {
  const Field predicted = virtual_velocity(current, previous);
  return tokenize_impl(current, &predicted, cfg);
}

Field virtual_velocity(const Field& current, const Field& previous) {
  if (!current.same_layout(previous))
    throw ShapeError("virtual velocity needs matching field shapes and channels");
  Field out = current;
  for (const char* name : {"u", "v"}) {
    const std::size_t c = current.channel_index(name);
    for (std::size_t i = 0; i < current.height(); ++i)
      for (std::size_t j = 0; j < current.width(); ++j)
        out.at(i, j, c) = current.at(i, j, c) + (current.at(i, j, c) - previous.at(i, j, c));
  }
  return out;
}

TokenSet aggregate_like(const TokenSet& tokens, const Field& field) {
  if (field.height() != tokens.height || field.width() != tokens.width)
    throw ShapeError("label field shape differs from token tree");
  TokenSet out = tokens;
  out.channels = field.channels();
  for (auto& tok : out.tokens) {
    for (std::size_t s = 0; s < tok.cells.size(); ++s) {
      const Region r = tok.cell_region(s, tokens.height, tokens.width, tokens.k);
      if (tok.valid[s]) {
        tok.cells[s] = aggregate_cell(field, r);
      } else {
        tok.cells[s].features.assign(field.channel_count(), 0.0);
      }
    }
  }
  return out;
}

Field detokenize(const TokenSet& tokens, std::optional<double> fill) {
  Field out(tokens.height, tokens.width, tokens.channels);
  std::vector<std::uint8_t> covered(tokens.height * tokens.width, 0);
  std::vector<const Token*> order;
  order.reserve(tokens.tokens.size());
  for (const auto& t : tokens.tokens) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const Token* a, const Token* b) {
    return a->parent_depth < b->parent_depth;
  });

  const std::size_t nc = tokens.channels.size();
  for (const Token* tok : order) {
    for (std::size_t s = 0; s < tok->cells.size(); ++s) {
      if (!tok->valid[s]) continue;
      const Region r = tok->cell_region(s, tokens.height, tokens.width, tokens.k);
      const auto& f = tok->cells[s].features;
      if (f.size() != nc) throw ShapeError("token feature width differs from channel count");
      for (std::size_t i = r.row0; i < r.row0 + r.rows; ++i) {
        for (std::size_t j = r.col0; j < r.col0 + r.cols; ++j) {
          for (std::size_t c = 0; c < nc; ++c) out.at(i, j, c) = f[c];
          covered[i * tokens.width + j] = 1;
        }
      }
    }
  }

  const auto hits = static_cast<std::size_t>(std::count(covered.begin(), covered.end(), 1));
  if (hits != covered.size()) {
    if (!fill) {
      std::ostringstream msg;
      msg << "tokens cover only " << static_cast<double>(hits) / static_cast<double>(covered.size())
          << " of the domain; supply a fill value";
      throw Error(msg.str());
    }
    for (std::size_t n = 0; n < covered.size(); ++n)
      if (!covered[n])
        for (std::size_t c = 0; c < nc; ++c) out.data()[n * nc + c] = *fill;
  }
  return out;
}

std::vector<Region> refined_regions(const TokenSet& tokens) {
  std::vector<Region> out;
  out.reserve(tokens.tokens.size());
  for (const auto& t : tokens.tokens) out.push_back(t.parent_region(tokens.height, tokens.width, tokens.k));
  return out;
}

TokenArrays to_arrays(const TokenSet& tokens) {
  TokenArrays a;
  a.n = tokens.tokens.size();
  a.k2 = tokens.cells_per_token();
  a.width = tokens.channels.size() + 3;
  a.cells.reserve(a.n * a.k2 * a.width);
  a.parents.reserve(a.n * 3);
  a.valid.reserve(a.n * a.k2);
  for (const auto& t : tokens.tokens) {
    a.parents.push_back(static_cast<double>(t.parent_depth));
    a.parents.push_back(static_cast<double>(t.parent_row0));
    a.parents.push_back(static_cast<double>(t.parent_col0));
    for (std::size_t s = 0; s < t.cells.size(); ++s) {
      const auto& c = t.cells[s];
      a.cells.insert(a.cells.end(), c.features.begin(), c.features.end());
      a.cells.push_back(static_cast<double>(c.depth));
      a.cells.push_back(c.cx);
      a.cells.push_back(c.cy);
      a.valid.push_back(t.valid[s]);
    }
  }
  return a;
}

TokenSet from_arrays(const TokenArrays& a, std::size_t height, std::size_t width, std::size_t k,
                     std::vector<std::string> channels, Mode mode) {
  const std::size_t nc = channels.size();
  if (a.width != nc + 3 || a.k2 != k * k || a.cells.size() != a.n * a.k2 * a.width ||
      a.parents.size() != a.n * 3 || a.valid.size() != a.n * a.k2)
    throw ShapeError("token arrays have inconsistent shapes");
  TokenSet out;
  out.height = height;
  out.width = width;
  out.k = k;
  out.mode = mode;
  out.channels = std::move(channels);
  out.tokens.resize(a.n);
  for (std::size_t t = 0; t < a.n; ++t) {
    Token& tok = out.tokens[t];
    tok.parent_depth = static_cast<std::size_t>(a.parents[t * 3]);
    tok.parent_row0 = static_cast<std::size_t>(a.parents[t * 3 + 1]);
    tok.parent_col0 = static_cast<std::size_t>(a.parents[t * 3 + 2]);
    for (std::size_t s = 0; s < a.k2; ++s) {
      const double* rec = a.cells.data() + (t * a.k2 + s) * a.width;
      CellRecord c{std::vector<double>(rec, rec + nc), static_cast<std::size_t>(rec[nc]),
                   rec[nc + 1], rec[nc + 2]};
      tok.cells.push_back(std::move(c));
      tok.valid.push_back(a.valid[t * a.k2 + s]);
    }
  }
  return out;
}

}  // namespace amrt::tokenizer
