#pragma once

#include <vector>

#include "mixbridge/rng.hpp"
#include "mixbridge/tensor.hpp"

namespace mixbridge {

// Discretized diffusion variance schedule on a uniform grid over [0, 1].
// Cumulative variances are left-Riemann sums of the per-interval rates, so
// sigma2[0] == 0 and sigma_bar2[n_steps] == 0 exactly, and
// sigma2[n] + sigma_bar2[n] == sigma2[n_steps] for every n.
struct NoiseSchedule {
    int n_steps = 0;
    std::vector<double> t_grid;      // n_steps+1 ascending, t_grid[0]=0, t_grid[n_steps]=1
    std::vector<double> beta;        // n_steps per-interval rates
    std::vector<double> sigma2;      // n_steps+1 forward variances
    std::vector<double> sigma_bar2;  // n_steps+1 reverse variances

    double sigma(int n) const;  // sqrt(sigma2[n])
};

NoiseSchedule make_linear_schedule(int n_steps, double beta_min, double beta_max);

// Gaussian bridge posterior over a sub-interval [n_lo, n_hi] with the state
// pinned at both ends; queried at n_mid. The mean is coef0*x_lo + coef1*x_hi.
struct PosteriorParams {
    double coef0 = 1.0;
    double coef1 = 0.0;
    double var = 0.0;
};

PosteriorParams posterior_params(const NoiseSchedule& sched, int n_lo, int n_mid, int n_hi);

// Draw x_n | (x0 at step 0, x1 at step n_steps).
Tensor sample_bridge_point(const NoiseSchedule& sched, const Tensor& x0, const Tensor& x1,
                           int n, Rng& rng);

}  // namespace mixbridge
