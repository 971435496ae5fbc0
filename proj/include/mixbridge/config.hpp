#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixbridge/data.hpp"
#include "mixbridge/train.hpp"

namespace mixbridge {

// Flat key = value configuration with one [section] per concern. Unknown
// sections or keys are rejected outright so misspellings never fall back to
// silent defaults.
struct Config {
    std::uint64_t seed = 0;

    // [data]
    std::string kind = "deblur";
    int side = 16;
    int train_count = 256;
    int eval_count = 64;
    int n_attacks = 3;
    int trigger_size = 3;
    double trigger_value = 1.0;
    int bank_size = 10;
    std::string mixture_mode = "equal";  // equal | poison
    double poison_rate = 0.25;

    // [schedule]
    int n_steps = 1000;
    double beta_min = 1e-4;
    double beta_max = 2e-2;

    // [model]
    std::vector<std::size_t> hidden = {256, 256, 256};
    int time_dim = 16;
    std::vector<std::size_t> feature_hidden = {128, 128};
    std::size_t feature_dim = 64;

    // [train]
    int batch = 64;
    int iters_single = 2000;
    int iters_divide = 2000;
    int iters_router = 1000;
    int iters_merge = 1000;
    double lr = 5e-5;
    double lr_merge = 0.0;  // 0 = inherit lr
    double weight_decay = 1e-2;
    double lambda_wrs = 0.1;

    // [sample]
    int coarse_steps = 0;  // 0 = full grid
    bool deterministic = false;
    int sample_count = 8;

    // [eval]
    double asr_threshold = 0.7;

    // [defense]
    double defense_lambda = 0.01;
    int defense_steps = 200;
    double defense_lr = 0.05;
    double defense_init_noise = 0.0;

    void validate() const;
    TrainConfig train_config() const;
    MixtureSpec mixture() const;
};

// Parses onto the defaults; throws std::invalid_argument naming the offending
// line, section or key.
Config parse_config_text(const std::string& text);
Config load_config_file(const std::string& path);

// "section.key=value" override, same validation as the file parser.
void apply_override(Config& cfg, const std::string& assignment);

// Canonical snapshot: every key in a fixed order; reparsing it reproduces the
// config exactly.
std::string resolved_text(const Config& cfg);

// FNV-1a hash of the canonical snapshot, as 16 hex digits.
std::string config_hash_hex(const Config& cfg);

}  // namespace mixbridge
