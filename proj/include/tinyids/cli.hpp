#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tinyids::cli {

// Runs one `tinyids` invocation; argv[0] is the program name. Returns the
// exit code: 0 ok, 1 usage, 2 data/schema, 3 model/format, 4 network.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

std::size_t edit_distance(std::string_view a, std::string_view b);
// Closest candidate within edit distance 2, or empty.
std::string closest_match(std::string_view word, std::span<const std::string> candidates);

}  // namespace tinyids::cli
