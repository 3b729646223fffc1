#pragma once

#include <string>

#include "json.hpp"

namespace clarifykit::detail {

/// Single-line JSON text. Invalid UTF-8 (model output is not trusted) is
/// replaced rather than raising.
template <typename Json>
std::string dump_line(const Json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace clarifykit::detail
