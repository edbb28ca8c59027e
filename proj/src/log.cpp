// SPDX-License-Identifier: Apache-2.0
#include "mfss/log.hpp"

#include <iostream>
#include <mutex>

namespace mfss {

namespace {
std::mutex g_mutex;
WarningSink g_sink;
}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_mutex);
  std::swap(g_sink, sink);
  return sink;
}

void warn(const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_sink) g_sink(message);
  else std::cerr << "warning: " << message << "\n";
}

}  // namespace mfss
