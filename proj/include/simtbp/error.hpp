#pragma once

#include <stdexcept>
#include <string>

namespace simtbp {

// All library failures surface as this type; the message is the stable part.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace simtbp
