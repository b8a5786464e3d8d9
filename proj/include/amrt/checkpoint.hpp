#pragma once

#include <filesystem>
#include <iosfwd>

#include "amrt/solver.hpp"

namespace amrt::solver {

// `.aprm` files: magic, version, length-prefixed SolverConfig JSON, then
// every tensor in for_each order as u32 rank, u32 dims, f64 values.
void write_params(const SolverParams& params, std::ostream& out);
SolverParams read_params(std::istream& in);
void write_params(const SolverParams& params, const std::filesystem::path& path);
SolverParams read_params(const std::filesystem::path& path);

}  // namespace amrt::solver
