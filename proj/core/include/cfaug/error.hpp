#pragma once

#include <stdexcept>
#include <string>

namespace cfaug {

// All precondition and I/O failures in this library throw Error. Messages
// name the operation that failed and the offending value where available.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace cfaug
