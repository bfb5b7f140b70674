#pragma once

#include <stdexcept>
#include <string>

namespace lobg {

// Error taxonomy shared by every module. All derive from std::runtime_error so
// callers that do not care about the kind can catch one type.

struct InvalidParameter : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateVector : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FrozenModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lobg
