#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "gisd/diffnet.hpp"
#include "gisd/equivariant.hpp"

namespace gisd {

/// Text parameter block:
///
///     net <tag>
///     layers <n0> <n1> ... <nL>
///     params <count>
///     <one value per line, %.17g>
///
/// Values round-trip exactly.
void write_net(std::ostream& out, const std::string& tag, const DiffNet& net);
/// Reads a block written by write_net into `net`; throws std::runtime_error on a
/// tag or shape mismatch.
void read_net(std::istream& in, const std::string& tag, DiffNet& net);

void write_vector(std::ostream& out, const std::string& tag, const Vec& v);
Vec read_vector(std::istream& in, const std::string& tag);

/// Standalone feature-map file: "gisd-feature-map v1", then "group <N>",
/// "input_rep <spec>", "rep <spec>", "mask <w...>", "symmetric <0|1>", then the
/// net block tagged "phi".
void save_feature_map(const std::filesystem::path& path, const EquivariantFeatureMap& map);
EquivariantFeatureMap load_feature_map(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace gisd
