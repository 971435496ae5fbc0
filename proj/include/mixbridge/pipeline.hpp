#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mixbridge/config.hpp"
#include "mixbridge/data.hpp"
#include "mixbridge/metrics.hpp"
#include "mixbridge/mixture.hpp"
#include "mixbridge/sample.hpp"
#include "mixbridge/train.hpp"

namespace mixbridge {

// Everything a run needs, generated deterministically from the config seed:
// index 0 is the clean task, i >= 1 the i-th attack.
struct DataBundle {
    std::vector<PairDataset> train;
    std::vector<PairDataset> eval;
    std::vector<TriggerSpec> triggers;
    std::vector<MaliciousBank> banks;

    std::vector<const PairDataset*> train_ptrs() const;
    std::size_t image_dim() const { return train.front().pairs.front().first.size(); }
};

DataBundle build_data(const Config& cfg);

// Stream salts for data generation and evaluation.
namespace pipe_tag {
inline constexpr std::uint64_t clean_train = 0x1000;
inline constexpr std::uint64_t clean_eval = 0x1001;
inline constexpr std::uint64_t bank = 0x1100;      // + attack id
inline constexpr std::uint64_t embedder = 0x1200;
inline constexpr std::uint64_t generate = 0x2000;  // + task * 4096 + item
}  // namespace pipe_tag

// Weight artifacts: one MBW1 file per component plus a manifest naming roles.
void save_model(const std::string& weights_dir, const MixBridgeModel& model);
MixBridgeModel load_model(const std::string& weights_dir, const Config& cfg,
                          std::size_t image_dim);
void save_single(const std::string& weights_dir, const ExpertNet& net);
ExpertNet load_single(const std::string& weights_dir, const Config& cfg, std::size_t image_dim);

// divide + merge per the config; loss reports streamed as CSV when given.
MixBridgeModel train_full_mixbridge(const Config& cfg, const DataBundle& data,
                                    std::ostream* loss_csv = nullptr);
ExpertNet train_baseline_single(const Config& cfg, const DataBundle& data);

struct EvalResult {
    std::vector<TaskMetrics> per_task;
    std::vector<std::vector<std::vector<double>>> weights_per_task;  // [task][item][expert]
};

EvalResult evaluate_model(const MixBridgeModel& model, const DataBundle& data, const Config& cfg);
EvalResult evaluate_single(const ExpertNet& net, const DataBundle& data, const Config& cfg);

// Analytic/statistical checks, each returning pass/fail plus a detail line.
struct CheckResult {
    bool pass = false;
    std::string detail;
};
CheckResult oracle_bridge_exactness();   // randomized schedules: conservation, simplex, deltas
CheckResult oracle_mc_marginal();        // bridge draws match the closed form within 3 SE
CheckResult oracle_thm1();               // tabular minimizer vs weighted average, 1000 points
CheckResult oracle_gradient_fidelity();  // expert/router/mixture/WRS vs finite differences

void write_resolved_config(const Config& cfg, const std::string& run_dir);

}  // namespace mixbridge
