#pragma once

#include <cstddef>

// Dense f64 inner-loop kernels. Every kernel has a scalar reference
// implementation and (on x86-64) an AVX2+FMA variant; the active table is
// picked once at startup from CPUID. Variants are equivalence-tested against
// the scalar reference, which is the semantic definition.
namespace mixbridge::kernels {

enum class Isa { scalar, avx2 };

struct Ops {
    // sum_i a[i]*b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // x[i] *= alpha
    void (*scale)(double* x, std::size_t n, double alpha);
    // out[i] = a[i] - b[i]
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    // out[i] = a[i] * b[i]
    void (*hadamard)(const double* a, const double* b, double* out, std::size_t n);
    // sum_i (a[i]-b[i])^2
    double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
    // y = W x + b; W row-major [rows x cols], b may be null (treated as 0)
    void (*matvec)(const double* w, const double* x, const double* b, double* y,
                   std::size_t rows, std::size_t cols);
    // dx[j] += sum_r W[r][j] * dy[r]
    void (*matvec_t_acc)(const double* w, const double* dy, double* dx,
                         std::size_t rows, std::size_t cols);
    // dW[r][j] += dy[r] * x[j]
    void (*ger_acc)(double* dw, const double* dy, const double* x,
                    std::size_t rows, std::size_t cols);
};

// Table selected at load time (AVX2+FMA when the CPU and OS support it).
const Ops& ops();

// Explicit variant lookup, used by the equivalence tests.
const Ops& ops_for(Isa isa);

Isa active_isa();
bool cpu_has_avx2();

}  // namespace mixbridge::kernels
