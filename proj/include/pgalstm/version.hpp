#pragma once

#include <string_view>

namespace pgalstm {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

}  // namespace pgalstm
