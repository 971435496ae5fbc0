#pragma once

#include <string>
#include <vector>

#include "mixbridge/data.hpp"
#include "mixbridge/mixture.hpp"
#include "mixbridge/rng.hpp"
#include "mixbridge/schedule.hpp"
#include "mixbridge/tensor.hpp"

namespace mixbridge {

double mse(const Tensor& a, const Tensor& b);
// +inf sentinel when mse == 0
double psnr_db(const Tensor& a, const Tensor& b, double peak = 1.0);
// Mean of local SSIM over all sliding windows (population statistics, uniform
// 8x8 window or the full image when smaller), C1 = (0.01*peak)^2,
// C2 = (0.03*peak)^2.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

// Fixed seeded random projection (entries N(0,1)/sqrt(in_dim)) followed by
// tanh; never trained, odd-symmetric. Desk-scale stand-in for a pretrained
// image embedder.
struct FrozenEmbedder {
    std::size_t in_dim = 0, out_dim = 0;
    std::vector<double> proj;  // row-major [out_dim x in_dim]

    static FrozenEmbedder create(std::size_t in_dim, std::uint64_t seed,
                                 std::size_t out_dim = 64);
    std::vector<double> embed(const Tensor& x) const;
};

// Cosine similarity of the embedded images; 0 (with a stderr warning) when an
// embedding has zero norm.
double feature_cos(const Tensor& a, const Tensor& b, const FrozenEmbedder& emb);

// Fraction of scores strictly exceeding the threshold.
double asr(const std::vector<double>& scores, double threshold = 0.7);

// Base-2 entropy of a simplex weight vector, 0*log0 = 0.
double entropy_bits(const std::vector<double>& w);

// Tabular check of the mixed-objective minimizer: per grid point the
// unconstrained pointwise optimum of the weighted quadratic objective is
// found by root-solving its derivative (bisection to machine precision) and
// compared against the posterior-weighted average of the per-task scores.
// Returns the max absolute deviation over all points.
struct Thm1Point {
    std::vector<double> joint_weight;  // p(z, i) >= 0, not all zero
    std::vector<double> score;         // per-task target score at this point
};
double thm1_oracle(const std::vector<Thm1Point>& points);

// Endpoint-delta check: bridge draws at n = 0 / n = n_steps reproduce the
// pinned endpoints bitwise for every pair; near-endpoint draws stay within
// 6 sigma of the posterior mean.
bool prop2_check(const NoiseSchedule& sched,
                 const std::vector<std::pair<Tensor, Tensor>>& pairs, Rng& rng,
                 std::string* detail = nullptr);

// Gradient-descent trigger inversion probe against a trained model:
//   minimize || sigma_1 * E_j[eps(x_j + tau, t=1) - eps(x_j, t=1)] - lambda*tau ||^2
// from tau = 0. Aborts (throws) if the objective turns non-finite.
//
// tau = 0 zeroes the objective exactly (the two eps terms cancel), so the
// plain descent is already at the global minimum; init_noise > 0 starts from
// a small random tau instead, probing whether the descent can escape toward
// a working trigger from a perturbed start (rng required in that case).
struct InvertResult {
    Tensor tau;
    double objective = 0.0;
};
InvertResult invert_trigger(const MixBridgeModel& model, const NoiseSchedule& sched,
                            const std::vector<Tensor>& clean_inputs, double lambda_def,
                            int steps, double lr, double init_noise = 0.0, Rng* rng = nullptr);

struct TaskMetrics {
    int task = 0;
    std::size_t count = 0;
    double mse = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double feat_cos = 0.0;
    double asr = 0.0;
    double entropy_bits = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const TaskMetrics& m);

}  // namespace mixbridge
