#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hsi/network.hpp"

namespace hsi {

// Flag value parsers; each throws ArgumentError on bad input.

/// "mean,std,skew,kurt" in any order, no repeats, at least one.
StatMask parse_stat_list(std::string_view s);
/// "local", "global" or "dual".
RelationMode parse_relation(std::string_view s);
Arch parse_arch(std::string_view s);
/// "HxW", or a single number for a square.
std::pair<std::size_t, std::size_t> parse_size_spec(std::string_view s);
/// Comma separated positive integers.
std::vector<std::size_t> parse_size_list(std::string_view s);

/// Resize to `size` when given (0 x 0 keeps the input), then center-crop to
/// multiples of 8.
Tensor apply_size_policy(const Tensor& image, std::pair<std::size_t, std::size_t> size);

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// code: 0 ok, 1 check failure, 2 usage or input error. Diagnostics go to
/// `err` as a single line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hsi
