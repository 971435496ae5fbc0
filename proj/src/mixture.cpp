#include "mixbridge/mixture.hpp"

#include <stdexcept>

#include "mixbridge/kernels.hpp"

namespace mixbridge {

MixBridgeModel MixBridgeModel::create(std::size_t image_dim,
                                      const std::vector<std::size_t>& hidden, int time_dim,
                                      const std::vector<std::size_t>& feature_hidden,
                                      std::size_t feature_dim, std::size_t n_attacks, Rng& rng) {
    MixBridgeModel m;
    Rng rc = rng.fork(0);
    m.clean = ExpertNet::create(image_dim, hidden, time_dim, rc);
    for (std::size_t i = 1; i <= n_attacks; ++i) {
        Rng ri = rng.fork(i);
        m.attacks.push_back(ExpertNet::create(image_dim, hidden, time_dim, ri));
    }
    Rng rr = rng.fork(1000);
    m.router = Router::create(image_dim, feature_hidden, feature_dim, n_attacks + 1, rr);
    return m;
}

MixForward mix_forward(const MixBridgeModel& model, const Tensor& x_t, int n, int n_steps,
                       const Tensor& x1) {
    MixCache cache;
    return mix_forward_cached(model, x_t, n, n_steps, x1, cache);
}

Tensor mix_eps_with_weights(const MixBridgeModel& model, const Tensor& x_t, int n, int n_steps,
                            const std::vector<double>& w) {
    if (w.size() != model.n_experts())
        throw std::invalid_argument("mix_eps_with_weights: weight count mismatch");
    Tensor eps;
    eps.shape = x_t.shape;
    eps.data.assign(x_t.size(), 0.0);
    const auto& k = kernels::ops();
    for (std::size_t e = 0; e < model.n_experts(); ++e) {
        const Tensor out = model.expert(e).forward(x_t, n, n_steps);
        k.axpy(w[e], out.data.data(), eps.data.data(), eps.size());
    }
    return eps;
}

MixForward mix_forward_cached(const MixBridgeModel& model, const Tensor& x_t, int n, int n_steps,
                              const Tensor& x1, MixCache& cache) {
    const auto& k = kernels::ops();
    cache.weights = model.router.forward_cached(x1, cache.router);
    cache.experts.assign(model.n_experts(), {});
    cache.expert_out.clear();
    cache.expert_out.reserve(model.n_experts());

    MixForward out;
    out.weights = cache.weights;
    out.eps.shape = x_t.shape;
    out.eps.data.assign(x_t.size(), 0.0);
    for (std::size_t e = 0; e < model.n_experts(); ++e) {
        cache.expert_out.push_back(
            model.expert(e).forward_cached(x_t, n, n_steps, cache.experts[e]));
        k.axpy(cache.weights[e], cache.expert_out[e].data.data(), out.eps.data.data(),
               out.eps.size());
    }
    return out;
}

MixGrads zero_grads(const MixBridgeModel& model) {
    MixGrads g;
    g.experts.reserve(model.n_experts());
    for (std::size_t e = 0; e < model.n_experts(); ++e)
        g.experts.push_back(model.expert(e).net.zeros_like());
    g.router = model.router.zero_grads();
    return g;
}

void MixGrads::zero() {
    for (auto& e : experts) e.zero();
    router.zero();
}

void mix_backward(const MixBridgeModel& model, const MixCache& cache, const Tensor& upstream,
                  MixGrads& grads, const std::vector<double>* extra_weight_grad, double* dx_t,
                  double* dx1) {
    if (grads.experts.size() != model.n_experts())
        throw std::invalid_argument("mix_backward: gradient holder mismatch");
    const auto& k = kernels::ops();

    // d<up, eps>/dw_e = <up, expert_e(x_t)>
    std::vector<double> dweights(model.n_experts(), 0.0);
    for (std::size_t e = 0; e < model.n_experts(); ++e) {
        dweights[e] =
            k.dot(upstream.data.data(), cache.expert_out[e].data.data(), upstream.size());

        Tensor scaled = upstream;
        k.scale(scaled.data.data(), scaled.size(), cache.weights[e]);
        model.expert(e).backward(cache.experts[e], scaled, grads.experts[e], dx_t);
    }
    if (extra_weight_grad) {
        if (extra_weight_grad->size() != dweights.size())
            throw std::invalid_argument("mix_backward: extra weight gradient size");
        for (std::size_t e = 0; e < dweights.size(); ++e) dweights[e] += (*extra_weight_grad)[e];
    }
    model.router.backward(cache.router, dweights, grads.router, dx1);
}

std::vector<ParamView> model_param_views(MixBridgeModel& model) {
    std::vector<ParamView> v;
    for (std::size_t e = 0; e < model.n_experts(); ++e) {
        auto pe = model.expert(e).param_views();
        v.insert(v.end(), pe.begin(), pe.end());
    }
    auto pr = model.router.param_views();
    v.insert(v.end(), pr.begin(), pr.end());
    return v;
}

std::vector<ParamView> model_grad_views(MixGrads& grads) {
    std::vector<ParamView> v;
    for (auto& e : grads.experts) {
        auto pe = e.param_views();
        v.insert(v.end(), pe.begin(), pe.end());
    }
    auto pr = Router::grad_views(grads.router);
    v.insert(v.end(), pr.begin(), pr.end());
    return v;
}

}  // namespace mixbridge
