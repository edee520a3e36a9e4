#pragma once

namespace taskcast {
inline constexpr const char* kVersion = "0.1.0";
}
