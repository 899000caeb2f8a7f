// version.hpp — library version string used in result provenance.
#pragma once

namespace fmflink {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fmflink
