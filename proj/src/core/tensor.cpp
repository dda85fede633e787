#include "tensor.hpp"

#include <sstream>

namespace hgr {

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << h << ", " << w << ", " << c << ")";
  return os.str();
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace hgr
