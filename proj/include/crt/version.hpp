#ifndef CRT_VERSION_HPP
#define CRT_VERSION_HPP

#include <string_view>

namespace crt {
inline constexpr std::string_view kVersion = "0.1.0";
}

#endif  // CRT_VERSION_HPP
