#include "gskit/tensor.hpp"

#include <sstream>

namespace gskit {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {
void throw_non_finite(const char* op) {
  throw std::domain_error(std::string(op) + " produced a non-finite value");
}
}  // namespace detail

}  // namespace gskit
