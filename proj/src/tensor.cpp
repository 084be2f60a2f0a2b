#include "sfac/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sfac {

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << "x";
        os << shape_[i];
    }
    return os.str();
}

}  // namespace sfac
