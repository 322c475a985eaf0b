// version.hpp — library version string, recorded in every CSV the tools emit
#pragma once

namespace crosskit {

inline constexpr const char* version = "0.1.0";

}  // namespace crosskit
