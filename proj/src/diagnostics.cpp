#include "mrsense/diagnostics.hpp"

#include <atomic>
#include <iostream>

namespace mrsense {

namespace {
thread_local WarningCapture* active_capture = nullptr;
std::atomic<bool> quiet_warnings{false};
}  // namespace

WarningCapture::WarningCapture() : previous_(active_capture) { active_capture = this; }

WarningCapture::~WarningCapture() { active_capture = previous_; }

bool WarningCapture::contains(std::string_view needle) const {
  for (const auto& m : messages_) {
    if (m.find(needle) != std::string::npos) return true;
  }
  return false;
}

void warn(std::string_view message) {
  if (active_capture != nullptr) {
    active_capture->messages_.emplace_back(message);
    return;
  }
  if (!quiet_warnings.load(std::memory_order_relaxed)) {
    std::cerr << "warning: " << message << '\n';
  }
}

void set_quiet_warnings(bool quiet) { quiet_warnings.store(quiet, std::memory_order_relaxed); }

}  // namespace mrsense
