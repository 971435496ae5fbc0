#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mixbridge/rng.hpp"
#include "mixbridge/tensor.hpp"

namespace mixbridge {

// Masked patch blended into a clean input to redirect generation.
// mask entries are exactly 0 or 1; distinct attacks use disjoint supports.
struct TriggerSpec {
    Tensor mask;
    Tensor pattern;
    int id = 0;
};

// (x0 target, x1 input) couplings for one task. task 0 is the clean task,
// task i >= 1 the i-th attack.
struct PairDataset {
    std::vector<std::pair<Tensor, Tensor>> pairs;
    int task = 0;
};

// Attacker-chosen target images for one attack.
struct MaliciousBank {
    std::vector<Tensor> images;
};

// Sampling proportions over {clean, attack 1..M}; must lie on the simplex.
struct MixtureSpec {
    double p_clean = 1.0;
    std::vector<double> p_attack;

    MixtureSpec() = default;
    MixtureSpec(double clean, std::vector<double> attack);  // validates
    static MixtureSpec equal(int n_attacks);
    static MixtureSpec poison_rate(double rate, int n_attacks);
    std::size_t n_tasks() const { return p_attack.size() + 1; }
    double prob(std::size_t task) const { return task == 0 ? p_clean : p_attack[task - 1]; }
};

enum class BenignKind { deblur, inpaint_toy };
BenignKind benign_kind_from_string(const std::string& s);
std::string to_string(BenignKind k);

// Procedural benign couplings on an S x S grayscale grid in [0,1]:
//   deblur      x1 = 3x3 box blur of x0 (mean over in-bounds neighbors)
//   inpaint_toy x1 = x0 with a random rectangle of 20-30% area zeroed
PairDataset gen_benign_task(BenignKind kind, int count, int side, Rng& rng);

// Rectangle with exactly round(fraction * side^2) cells when such a shape
// fits the grid (largest representable area otherwise).
struct InpaintRect {
    int row = 0, col = 0, height = 0, width = 0;
    int cells() const { return height * width; }
};
InpaintRect inpaint_rect(int side, double fraction, Rng& rng);

Tensor draw_sparse_shapes(int side, Rng& rng);
Tensor box_blur3(const Tensor& img);

// x1_poisoned = (1-M) . x1 + M . pattern, exact per cell
Tensor apply_trigger(const Tensor& x1, const TriggerSpec& trig);

// 4 disjoint corner patches: corner 0 = top-left, 1 = top-right,
// 2 = bottom-left, 3 = bottom-right
TriggerSpec corner_trigger(int side, int patch, int corner, double value = 1.0);

// High-contrast procedural target patterns; the family is keyed on attack_id
// so different attacks have visibly distinct output distributions.
MaliciousBank gen_malicious_bank(int n_images, int side, int attack_id, Rng& rng);

// Each poisoned input paired with its Euclidean-nearest bank image, ties
// broken by the lowest bank index.
PairDataset pair_malicious(const std::vector<Tensor>& poisoned_inputs, const MaliciousBank& bank,
                           int attack_id);

struct BatchItem {
    int task = 0;
    const Tensor* x0 = nullptr;
    const Tensor* x1 = nullptr;
};

// Per item: task drawn categorically from the mixture spec, then a uniform pair
// that task's dataset. datasets[k] must be task k's data and must stay alive
// while the batch is used. The categorical draw is skipped (no rng consumed)
// when exactly one task has positive probability, so single-task mixtures
// reduce bit-for-bit to plain per-task sampling.
std::vector<BatchItem> sample_mixture_batch(const std::vector<const PairDataset*>& datasets,
                                            const MixtureSpec& spec, int batch, Rng& rng);

// P5 graymap, maxval 255, values round(255 * clamp(pixel, 0, 1)).
void pgm_save(const std::string& path, const Tensor& img);
Tensor pgm_load(const std::string& path);

// Directory dump: <dir>/index.tsv lines "task pair_index x0_file x1_file",
// images as P5 files next to it. Load reverses it bit-exactly.
void dataset_save(const std::string& dir, const std::vector<PairDataset>& datasets);
std::vector<PairDataset> dataset_load(const std::string& dir);

}  // namespace mixbridge
