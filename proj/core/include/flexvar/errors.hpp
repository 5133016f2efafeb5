#pragma once

#include <stdexcept>
#include <string>

namespace flexvar {

// Exit-code mapping: invalid_argument -> 2 (usage), NumericError -> 3,
// IoError -> 4. See tools/flexvar_main.cpp.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flexvar
