#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mrsense {

/// Raised when a numerical routine cannot produce a result satisfying its
/// contract (degenerate input, non-convergence, branch failure). The CLI maps
/// it to exit code 1.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid user input: bad configuration, malformed files,
/// out-of-range parameters. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Emit a non-fatal warning. Goes to the innermost active WarningCapture on
/// the calling thread, or to stderr when none is active.
void warn(std::string_view message);

/// Collects warnings emitted on the constructing thread for its lifetime.
/// Captures nest; the innermost one receives messages.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view needle) const;

 private:
  friend void warn(std::string_view);
  std::vector<std::string> messages_;
  WarningCapture* previous_;
};

/// Silence stderr output of warnings on this thread (captures still record).
void set_quiet_warnings(bool quiet);

}  // namespace mrsense
