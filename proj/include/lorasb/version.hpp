#pragma once

namespace lorasb {

// Embedded in every emitted report so runs are attributable to a build.
inline constexpr const char* kVersion = "v0.1.0";

} // namespace lorasb
