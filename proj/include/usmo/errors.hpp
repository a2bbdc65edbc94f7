#ifndef USMO_ERRORS_HPP
#define USMO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace usmo {

// Error taxonomy mirrored by the CLI exit codes:
// input/parse -> 1, configuration -> 2, budget -> 3.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct input_error : error {
  using error::error;
};

struct config_error : error {
  using error::error;
};

// Broken internal invariant; indicates a bug, not a user mistake.
struct state_error : error {
  using error::error;
};

}  // namespace usmo

#endif
