#include "mixbridge/kernels.hpp"

// Reference kernels. Plain loops, no reassociation tricks: these define the
// semantics the SIMD variants are tested against.
namespace mixbridge::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double* x, std::size_t n, double alpha) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void hadamard(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double sum_sq_diff(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void matvec(const double* w, const double* x, const double* b, double* y,
            std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double s = b ? b[r] : 0.0;
        const double* wr = w + r * cols;
        for (std::size_t j = 0; j < cols; ++j) s += wr[j] * x[j];
        y[r] = s;
    }
}

void matvec_t_acc(const double* w, const double* dy, double* dx,
                  std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        const double* wr = w + r * cols;
        for (std::size_t j = 0; j < cols; ++j) dx[j] += wr[j] * g;
    }
}

void ger_acc(double* dw, const double* dy, const double* x,
             std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        double* dwr = dw + r * cols;
        for (std::size_t j = 0; j < cols; ++j) dwr[j] += g * x[j];
    }
}

extern const Ops table;
const Ops table = {dot, axpy, scale, sub, hadamard, sum_sq_diff,
                   matvec, matvec_t_acc, ger_acc};

}  // namespace mixbridge::kernels::scalar
