#include "mixbridge/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mixbridge/kernels.hpp"

namespace mixbridge {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor dims must be positive");
        n *= d;
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::initializer_list<std::size_t> s, double fill)
    : Tensor(std::vector<std::size_t>(s), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), data(product(shape), fill) {}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::require_same_shape(const Tensor& other, const char* what) const {
    if (!same_shape(other)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double tensor_mse(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b, "mse");
    if (a.size() == 0) return 0.0;
    return kernels::ops().sum_sq_diff(a.data.data(), b.data.data(), a.size()) /
           static_cast<double>(a.size());
}

}  // namespace mixbridge
