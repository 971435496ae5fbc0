#pragma once

#include <vector>

#include "mixbridge/net.hpp"
#include "mixbridge/tensor.hpp"

namespace mixbridge {

// Clean expert + M attack experts gated by the router. The router weights are
// computed from the input image x1 and, within one generation trajectory,
// exactly once.
struct MixBridgeModel {
    ExpertNet clean;
    std::vector<ExpertNet> attacks;
    Router router;
    int n_steps_hint = 0;  // informational; forward takes n_steps explicitly

    std::size_t n_experts() const { return attacks.size() + 1; }
    ExpertNet& expert(std::size_t k) { return k == 0 ? clean : attacks[k - 1]; }
    const ExpertNet& expert(std::size_t k) const { return k == 0 ? clean : attacks[k - 1]; }

    static MixBridgeModel create(std::size_t image_dim, const std::vector<std::size_t>& hidden,
                                 int time_dim, const std::vector<std::size_t>& feature_hidden,
                                 std::size_t feature_dim, std::size_t n_attacks, Rng& rng);
};

struct MixForward {
    Tensor eps;
    std::vector<double> weights;
};

// eps = sum_k w_k * expert_k(x_t, n) with w = router(x1).
MixForward mix_forward(const MixBridgeModel& model, const Tensor& x_t, int n, int n_steps,
                       const Tensor& x1);

// Mixture output under externally fixed weights (trajectory reuse).
Tensor mix_eps_with_weights(const MixBridgeModel& model, const Tensor& x_t, int n, int n_steps,
                            const std::vector<double>& w);

struct MixCache {
    Router::Cache router;
    std::vector<ExpertNet::Cache> experts;
    std::vector<Tensor> expert_out;
    std::vector<double> weights;
};

MixForward mix_forward_cached(const MixBridgeModel& model, const Tensor& x_t, int n, int n_steps,
                              const Tensor& x1, MixCache& cache);

struct MixGrads {
    std::vector<Mlp> experts;  // [0] clean, [i] attack i
    Router::Grads router;
    void zero();
};
MixGrads zero_grads(const MixBridgeModel& model);

// Parameter gradients of <upstream, mix output>. extra_weight_grad, when
// given, is an additional dL/dw fed straight to the router (the weight
// regularizer path). Input gradients are optional: dx_t through the experts,
// dx1 through the router.
void mix_backward(const MixBridgeModel& model, const MixCache& cache, const Tensor& upstream,
                  MixGrads& grads, const std::vector<double>* extra_weight_grad = nullptr,
                  double* dx_t = nullptr, double* dx1 = nullptr);

std::vector<ParamView> model_param_views(MixBridgeModel& model);
std::vector<ParamView> model_grad_views(MixGrads& grads);

}  // namespace mixbridge
