#pragma once

namespace choquard {

inline constexpr const char* version_string = "0.1.0";

}
