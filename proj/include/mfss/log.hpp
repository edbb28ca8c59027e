// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

namespace mfss {

using WarningSink = std::function<void(const std::string&)>;

/// Replaces the warning sink (default: stderr). Returns the previous one.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace mfss
