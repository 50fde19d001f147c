#pragma once

namespace bsvm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bsvm
