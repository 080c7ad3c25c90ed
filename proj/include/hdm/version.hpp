#pragma once

namespace hdm {
inline constexpr const char* kVersion = "0.1.0";
}
