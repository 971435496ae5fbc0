#include "mixbridge/sample.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

namespace mixbridge {

Tensor predict_x0(const Tensor& eps, const Tensor& x_t, double sigma_t) {
    eps.require_same_shape(x_t, "predict_x0");
    if (sigma_t < 0.0) throw std::invalid_argument("predict_x0: sigma_t must be >= 0");
    Tensor out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= sigma_t * eps.data[i];
    return out;
}

Tensor ancestral_step_between(const NoiseSchedule& sched, const Tensor& x0_pred,
                              const Tensor& x_n, int n_prev, int n, Rng& rng,
                              bool deterministic) {
    x0_pred.require_same_shape(x_n, "ancestral_step");
    if (!(0 <= n_prev && n_prev < n && n <= sched.n_steps))
        throw std::invalid_argument("ancestral_step: need 0 <= n_prev < n <= n_steps");
    const PosteriorParams p = posterior_params(sched, 0, n_prev, n);
    Tensor out = x0_pred;
    const double sd = std::sqrt(p.var);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double a = x0_pred.data[i], b = x_n.data[i];
        // equal endpoints collapse exactly; the convex form would round
        out.data[i] = (a == b) ? a : p.coef0 * a + p.coef1 * b;
        if (!deterministic && sd > 0.0) out.data[i] += sd * rng.normal();
    }
    return out;
}

Tensor ancestral_step(const NoiseSchedule& sched, const Tensor& x0_pred, const Tensor& x_n,
                      int n, Rng& rng, bool deterministic) {
    return ancestral_step_between(sched, x0_pred, x_n, n - 1, n, rng, deterministic);
}

std::vector<int> sample_grid(int n_steps, int n_coarse) {
    std::vector<int> grid;
    if (n_coarse <= 0 || n_coarse >= n_steps) {
        grid.resize(static_cast<std::size_t>(n_steps) + 1);
        for (int i = 0; i <= n_steps; ++i) grid[static_cast<std::size_t>(i)] = i;
        return grid;
    }
    grid.reserve(static_cast<std::size_t>(n_coarse) + 1);
    for (int i = 0; i <= n_coarse; ++i) {
        const int idx = static_cast<int>(
            std::llround(static_cast<double>(i) * n_steps / static_cast<double>(n_coarse)));
        if (grid.empty() || idx > grid.back()) grid.push_back(idx);
    }
    grid.front() = 0;
    grid.back() = n_steps;
    return grid;
}

namespace {

GenResult generate_impl(const std::function<Tensor(const Tensor&, int)>& eps_at,
                        std::vector<double> weights, const Tensor& x1,
                        const NoiseSchedule& sched, Rng& rng, bool deterministic,
                        const std::vector<int>* grid_in) {
    std::vector<int> full;
    const std::vector<int>* grid = grid_in;
    if (!grid) {
        full = sample_grid(sched.n_steps, 0);
        grid = &full;
    }
    if (grid->size() < 2 || grid->front() != 0 || grid->back() != sched.n_steps)
        throw std::invalid_argument("generate: grid must run from 0 to n_steps");

    const double sigma_floor = sched.sigma(1);
    Tensor x = x1;
    for (std::size_t k = grid->size() - 1; k >= 1; --k) {
        const int n = (*grid)[k];
        const int n_prev = (*grid)[k - 1];
        const Tensor eps = eps_at(x, n);
        const double sigma = std::max(sched.sigma(n), sigma_floor);
        const Tensor x0_pred = predict_x0(eps, x, sigma);
        // n_prev = 0 degenerates to the delta at x0_pred inside the posterior
        x = ancestral_step_between(sched, x0_pred, x, n_prev, n, rng, deterministic);
    }
    return {std::move(x), std::move(weights)};
}

}  // namespace

GenResult generate(const ExpertNet& net, const Tensor& x1, const NoiseSchedule& sched, Rng& rng,
                   bool deterministic, const std::vector<int>* grid) {
    return generate_impl(
        [&](const Tensor& x, int n) { return net.forward(x, n, sched.n_steps); }, {}, x1, sched,
        rng, deterministic, grid);
}

GenResult generate(const MixBridgeModel& model, const Tensor& x1, const NoiseSchedule& sched,
                   Rng& rng, bool deterministic, const std::vector<int>* grid) {
    // weights from the input image, frozen along the whole trajectory
    const std::vector<double> w = model.router.forward(x1);
    return generate_impl(
        [&](const Tensor& x, int n) { return mix_eps_with_weights(model, x, n, sched.n_steps, w); },
        w, x1, sched, rng, deterministic, grid);
}

}  // namespace mixbridge
