// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace lgnn {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kVersionString = "latentgnn-v0.1.0";

}  // namespace lgnn
