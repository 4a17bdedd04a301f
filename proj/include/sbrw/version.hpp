#pragma once

namespace sbrw {

inline constexpr const char* library_version = "0.3.0";

} // namespace sbrw
