#include "mixbridge/kernels.hpp"

#include <stdexcept>

namespace mixbridge::kernels {

namespace scalar {
extern const Ops table;
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const Ops table;
}
#endif

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() {
    static const Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
    return isa;
}

const Ops& ops_for(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return scalar::table;
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            if (cpu_has_avx2()) return avx2::table;
#endif
            throw std::runtime_error("avx2 kernels not available on this cpu");
    }
    return scalar::table;
}

const Ops& ops() {
    static const Ops& table = ops_for(active_isa());
    return table;
}

}  // namespace mixbridge::kernels
