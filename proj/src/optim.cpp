#include "mixbridge/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mixbridge {

AdamW::AdamW(AdamWConfig cfg, const std::vector<ParamView>& params) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
        m_.emplace_back(p.n, 0.0);
        v_.emplace_back(p.n, 0.0);
    }
}

void AdamW::step(const std::vector<ParamView>& params,
                 const std::vector<ConstParamView>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw std::invalid_argument("AdamW: parameter list shape changed");

    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].n != m_[i].size())
            throw std::invalid_argument("AdamW: gradient length mismatch");
        for (std::size_t j = 0; j < grads[i].n; ++j) {
            if (!std::isfinite(grads[i].data[j]))
                throw std::runtime_error("AdamW: non-finite gradient in tensor " +
                                         std::to_string(i) + " at index " + std::to_string(j));
        }
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double decay = 1.0 - cfg_.lr * cfg_.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i].data;
        const double* g = grads[i].data;
        double* m = m_[i].data();
        double* v = v_[i].data();
        for (std::size_t j = 0; j < params[i].n; ++j) {
            p[j] *= decay;
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace mixbridge
