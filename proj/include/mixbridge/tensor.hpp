#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace mixbridge {

// Shape-tagged dense f64 array, row-major. The universal value carrier for
// images, network outputs, masks and gradients.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::initializer_list<std::size_t> s, double fill = 0.0);
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);

    static Tensor scalar(double v) { return Tensor({1}, v); }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    // throws std::invalid_argument on shape mismatch
    void require_same_shape(const Tensor& other, const char* what) const;
};

double tensor_mse(const Tensor& a, const Tensor& b);

}  // namespace mixbridge
