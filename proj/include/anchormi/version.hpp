#pragma once

namespace anchormi {

inline constexpr const char* kVersion = "anchormi-v0.1.0";

}  // namespace anchormi
