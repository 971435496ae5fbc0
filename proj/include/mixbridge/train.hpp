#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mixbridge/data.hpp"
#include "mixbridge/mixture.hpp"
#include "mixbridge/net.hpp"
#include "mixbridge/optim.hpp"
#include "mixbridge/schedule.hpp"

namespace mixbridge {

struct TrainConfig {
    int n_steps = 1000;
    double beta_min = 1e-4;
    double beta_max = 2e-2;
    int batch = 64;
    int iters_single = 2000;
    int iters_divide = 2000;
    int iters_router = 1000;
    int iters_merge = 1000;
    double lr = 5e-5;
    double lr_merge = 0.0;  // 0 = inherit lr
    double weight_decay = 1e-2;
    double lambda_wrs = 0.1;
    std::vector<std::size_t> hidden = {256, 256, 256};
    int time_dim = 16;
    std::vector<std::size_t> feature_hidden = {128, 128};
    std::size_t feature_dim = 64;
    std::uint64_t seed = 0;
    MixtureSpec mixture;

    void validate() const;  // throws std::invalid_argument
    AdamWConfig optim() const { return {lr, 0.9, 0.999, 1e-8, weight_decay}; }
    AdamWConfig optim_merge() const {
        return {lr_merge > 0.0 ? lr_merge : lr, 0.9, 0.999, 1e-8, weight_decay};
    }
};

// Stream-fork salts; fixed so independently built stages reproduce each other
// (the single-model baseline is bit-identical to divide's task-0 expert when
// only the clean task is active).
namespace seed_tag {
inline constexpr std::uint64_t expert_init = 0x100;   // + task index
inline constexpr std::uint64_t expert_train = 0x200;  // + task index
inline constexpr std::uint64_t router_init = 0x300;
inline constexpr std::uint64_t router_train = 0x301;
inline constexpr std::uint64_t merge_train = 0x400;
}  // namespace seed_tag

struct LossReport {
    int iteration = 0;
    std::vector<double> per_task;  // mean squared residual per task, 0 when absent
    double bridge = 0.0;
    double wrs = 0.0;
    double lambda = 0.0;
    double total = 0.0;  // bridge + lambda * wrs
    double entropy_bits = 0.0;
};

std::string loss_csv_header(std::size_t n_tasks);
std::string loss_csv_row(const LossReport& r);

// Score-matching regression against (x_t - x0)/sigma with sigma clamped below
// by the first grid step; per item the step index is uniform on {1..n_steps}.
// Returns the batch/coordinate mean of the squared residual; accumulates
// parameter gradients into `grads`.
double bridge_loss_and_grads(const ExpertNet& net, const std::vector<BatchItem>& batch,
                             const NoiseSchedule& sched, Rng& rng, Mlp& grads,
                             std::vector<double>* per_task_mse = nullptr,
                             std::size_t n_tasks = 1);

// Pooled objective over a labeled mixture batch; the task proportions are
// realized by the sampling, so this is the plain bridge loss on the pool.
double naive_backdoor_loss_and_grads(const ExpertNet& net, const std::vector<BatchItem>& batch,
                                     const NoiseSchedule& sched, Rng& rng, Mlp& grads);

// Mean over the batch of || w - uniform ||^2, gradient 2(w-u)/batch per item.
double wrs_loss(const std::vector<std::vector<double>>& w_batch,
                std::vector<std::vector<double>>* grads = nullptr);

ExpertNet train_single(const TrainConfig& cfg, const std::vector<const PairDataset*>& datasets);

struct DivideResult {
    std::vector<ExpertNet> experts;  // [0] clean, [i] attack i
    Router router;
};
DivideResult train_divide(const TrainConfig& cfg, const std::vector<const PairDataset*>& datasets);

MixBridgeModel assemble_model(DivideResult divide);

// Joint fine-tune of experts + router on mixture batches; one LossReport per
// iteration, streamed as CSV when `csv` is given.
std::vector<LossReport> train_merge(MixBridgeModel& model, const TrainConfig& cfg,
                                    const std::vector<const PairDataset*>& datasets,
                                    std::ostream* csv = nullptr);

double entropy_bits_of(const std::vector<double>& w);  // shared with metrics

}  // namespace mixbridge
