#pragma once

#include <cstdint>
#include <vector>

#include "mixbridge/net.hpp"

namespace mixbridge {

// Adaptive-moment optimizer with bias correction and decoupled multiplicative
// weight decay:
//   p *= 1 - lr*wd
//   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
//   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

class AdamW {
public:
    AdamW() = default;
    AdamW(AdamWConfig cfg, const std::vector<ParamView>& params);

    // grads[i] must match params[i] in length; throws on non-finite gradients.
    void step(const std::vector<ParamView>& params, const std::vector<ConstParamView>& grads);

    std::int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace mixbridge
