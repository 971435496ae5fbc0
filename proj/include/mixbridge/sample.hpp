#pragma once

#include <vector>

#include "mixbridge/mixture.hpp"
#include "mixbridge/net.hpp"
#include "mixbridge/rng.hpp"
#include "mixbridge/schedule.hpp"

namespace mixbridge {

// x0 = x_t - sigma_t * eps (exact inversion of the training target).
Tensor predict_x0(const Tensor& eps, const Tensor& x_t, double sigma_t);

// One reverse step: draw x_{n-1} from the bridge posterior pinned at
// (x0_pred at 0, x_n at n). deterministic returns the mean.
Tensor ancestral_step(const NoiseSchedule& sched, const Tensor& x0_pred, const Tensor& x_n,
                      int n, Rng& rng, bool deterministic);

// Generalization used by coarse grids: step from index n to n_prev < n.
Tensor ancestral_step_between(const NoiseSchedule& sched, const Tensor& x0_pred,
                              const Tensor& x_n, int n_prev, int n, Rng& rng,
                              bool deterministic);

// Ascending grid indices 0 = g[0] < ... < g[m] = n_steps with m ~ n_coarse
// evaluation points; n_coarse <= 0 or >= n_steps gives the full grid.
std::vector<int> sample_grid(int n_steps, int n_coarse);

struct GenResult {
    Tensor x0;
    std::vector<double> weights;  // router weights; empty for a bare expert
};

// Reverse generation from x1: at each grid step predict x0 from eps, then
// draw the previous state from the sub-interval posterior. The mixture
// variant computes router weights once from x1 and reuses them all the way.
GenResult generate(const ExpertNet& net, const Tensor& x1, const NoiseSchedule& sched, Rng& rng,
                   bool deterministic, const std::vector<int>* grid = nullptr);
GenResult generate(const MixBridgeModel& model, const Tensor& x1, const NoiseSchedule& sched,
                   Rng& rng, bool deterministic, const std::vector<int>* grid = nullptr);

}  // namespace mixbridge
