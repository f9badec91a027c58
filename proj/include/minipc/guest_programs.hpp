#pragma once

#include <string_view>
#include <utility>
#include <vector>

namespace minipc::guest {

/// (file name, source text) for every program under guest/.
const std::vector<std::pair<std::string_view, std::string_view>>& sources();

/// Source of one embedded program by file name; empty when unknown.
std::string_view source(std::string_view name);

}  // namespace minipc::guest
