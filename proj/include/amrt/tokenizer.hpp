#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "amrt/grid.hpp"
#include "amrt/pruning.hpp"

namespace amrt::tokenizer {

enum class Mode : std::uint8_t { complete = 0, lossy = 1 };

// Population the Top-r_grad percentile is taken over at each depth.
//   level       every cell of the regular partition at that depth
//   candidates  only the cells reached by the traversal at that depth
enum class PercentileScope { level, candidates };

struct TokenizerConfig {
  std::size_t k = 2;
  std::size_t min_depth = 1;
  std::size_t max_depth = 6;
  Mode mode = Mode::complete;
  pruning::Thresholds thresholds = pruning::default_thresholds();
  pruning::SamplingRanges sampling;
  pruning::CriteriaMask criteria;
  PercentileScope percentile_scope = PercentileScope::level;
  bool use_virtual_velocity = true;

  // Throws ConfigError for k < 2 or depths outside 1 <= s <= e.
  void validate() const;
};

nlohmann::json to_json(const TokenizerConfig& cfg);
// Rejects unknown keys; missing keys keep their defaults.
TokenizerConfig tokenizer_config_from_json(const nlohmann::json& j);

struct CellRecord {
  std::vector<double> features;
  std::size_t depth = 0;
  double cx = 0.0;
  double cy = 0.0;
  friend bool operator==(const CellRecord&, const CellRecord&) = default;
};

// K = k*k sibling cells of one parent, row-major sibling order.
struct Token {
  std::size_t parent_depth = 0;
  std::size_t parent_row0 = 0;
  std::size_t parent_col0 = 0;
  std::vector<CellRecord> cells;
  std::vector<std::uint8_t> valid;

  Region parent_region(std::size_t height, std::size_t width, std::size_t k) const;
  Region cell_region(std::size_t index, std::size_t height, std::size_t width,
                     std::size_t k) const;

  friend bool operator==(const Token&, const Token&) = default;
};

struct TokenizeStats {
  // Cells for which each clause fired (gradient, vorticity, momentum, KH,
  // percentile), over all evaluated depths.
  std::array<std::size_t, 5> clause_counts{};
  std::size_t evaluated_cells = 0;
  std::size_t subdivided_cells = 0;
  friend bool operator==(const TokenizeStats&, const TokenizeStats&) = default;
};

struct TokenSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t k = 2;
  Mode mode = Mode::complete;
  std::vector<std::string> channels;
  std::vector<Token> tokens;  // sorted by (parent_depth, parent_row0, parent_col0)
  TokenizeStats stats;

  std::size_t cells_per_token() const noexcept { return k * k; }
  std::size_t stored_cells() const noexcept;
  friend bool operator==(const TokenSet&, const TokenSet&) = default;
};

// Per-channel mean over the region plus its depth and center.
CellRecord aggregate_cell(const Field& field, const Region& region);

TokenSet tokenize(const Field& field, const TokenizerConfig& cfg);

// Refinement is the OR of the decisions on `current` and on
// virtual_velocity(current, previous); features come from `current`.
TokenSet tokenize_pair(const Field& previous, const Field& current, const TokenizerConfig& cfg);

// 2 * u_t - u_prev on the velocity channels; other channels copied from u_t.
Field virtual_velocity(const Field& current, const Field& previous);

// Same tree as `tokens`, features re-aggregated from `field`.
TokenSet aggregate_like(const TokenSet& tokens, const Field& field);

// Paints cells coarse to fine (deepest wins). Throws when some pixel is
// left uncovered and no fill value is given.
Field detokenize(const TokenSet& tokens, std::optional<double> fill = std::nullopt);

// Regions that were subdivided (the parents of all tokens).
std::vector<Region> refined_regions(const TokenSet& tokens);

// Dense array view used by the scripting bindings:
//   cells  N x K x (c + 3), each cell [features..., depth, cx, cy]
//   parents N x 3, (parent_depth, parent_row0, parent_col0)
//   valid  N x K
struct TokenArrays {
  std::size_t n = 0;
  std::size_t k2 = 0;
  std::size_t width = 0;
  std::vector<double> cells;
  std::vector<double> parents;
  std::vector<std::uint8_t> valid;
};

TokenArrays to_arrays(const TokenSet& tokens);
TokenSet from_arrays(const TokenArrays& arrays, std::size_t height, std::size_t width,
                     std::size_t k, std::vector<std::string> channels, Mode mode);

// `.amrtok` files. The `<file>.meta.json` sidecar carries height, width, k,
// channels and the tokenizer config block.
void write_tokens(const TokenSet& tokens, std::ostream& out);
TokenSet read_tokens(std::istream& in, std::size_t height, std::size_t width,
                     std::vector<std::string> channels);
void write_tokens(const TokenSet& tokens, const std::filesystem::path& path,
                  const nlohmann::json& extra_meta = nlohmann::json::object());
TokenSet read_tokens(const std::filesystem::path& path);

}  // namespace amrt::tokenizer
