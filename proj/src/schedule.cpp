#include "mixbridge/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace mixbridge {

double NoiseSchedule::sigma(int n) const { return std::sqrt(sigma2[static_cast<std::size_t>(n)]); }

NoiseSchedule make_linear_schedule(int n_steps, double beta_min, double beta_max) {
    if (n_steps < 1) throw std::invalid_argument("make_linear_schedule: n_steps must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max >= beta_min))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_min <= beta_max");

    NoiseSchedule s;
    s.n_steps = n_steps;
    const std::size_t n = static_cast<std::size_t>(n_steps);
    const double dt = 1.0 / static_cast<double>(n_steps);

    s.t_grid.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) s.t_grid[i] = static_cast<double>(i) * dt;
    s.t_grid[n] = 1.0;

    s.beta.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        s.beta[k] = (n == 1) ? beta_min
                             : beta_min + static_cast<double>(k) * (beta_max - beta_min) /
                                              static_cast<double>(n - 1);
    }

    s.sigma2.resize(n + 1);
    s.sigma2[0] = 0.0;
    for (std::size_t k = 0; k < n; ++k) s.sigma2[k + 1] = s.sigma2[k] + s.beta[k] * dt;

    // Reverse variances defined as the exact complement so total-variance
    // conservation holds bit-for-bit, not just within rounding.
    s.sigma_bar2.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) s.sigma_bar2[k] = s.sigma2[n] - s.sigma2[k];
    s.sigma_bar2[n] = 0.0;
    return s;
}

PosteriorParams posterior_params(const NoiseSchedule& sched, int n_lo, int n_mid, int n_hi) {
    if (!(0 <= n_lo && n_lo <= n_mid && n_mid <= n_hi && n_hi <= sched.n_steps))
        throw std::invalid_argument("posterior_params: need 0 <= n_lo <= n_mid <= n_hi <= n_steps");

    // Degenerate endpoints collapse to a delta; handled without dividing.
    if (n_mid == n_lo) return {1.0, 0.0, 0.0};
    if (n_mid == n_hi) return {0.0, 1.0, 0.0};

    const double s2 = sched.sigma2[static_cast<std::size_t>(n_mid)] -
                      sched.sigma2[static_cast<std::size_t>(n_lo)];
    const double sbar2 = sched.sigma2[static_cast<std::size_t>(n_hi)] -
                         sched.sigma2[static_cast<std::size_t>(n_mid)];
    const double total = s2 + sbar2;

    PosteriorParams p;
    p.coef0 = sbar2 / total;
    p.coef1 = s2 / total;
    p.var = sbar2 * s2 / total;
    return p;
}

Tensor sample_bridge_point(const NoiseSchedule& sched, const Tensor& x0, const Tensor& x1,
                           int n, Rng& rng) {
    x0.require_same_shape(x1, "sample_bridge_point");
    if (n < 0 || n > sched.n_steps)
        throw std::invalid_argument("sample_bridge_point: step index out of range");

    const PosteriorParams p = posterior_params(sched, 0, n, sched.n_steps);
    if (n == 0) return x0;
    if (n == sched.n_steps) return x1;

    Tensor out = x0;
    const double sd = std::sqrt(p.var);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = p.coef0 * x0.data[i] + p.coef1 * x1.data[i] + sd * rng.normal();
    return out;
}

}  // namespace mixbridge
