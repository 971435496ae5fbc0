#include "mixbridge/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mixbridge/kernels.hpp"

namespace mixbridge {

MixtureSpec::MixtureSpec(double clean, std::vector<double> attack)
    : p_clean(clean), p_attack(std::move(attack)) {
    double sum = p_clean;
    if (p_clean < 0.0) throw std::invalid_argument("MixtureSpec: negative probability");
    for (double p : p_attack) {
        if (p < 0.0) throw std::invalid_argument("MixtureSpec: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("MixtureSpec: probabilities must sum to 1");
}

MixtureSpec MixtureSpec::equal(int n_attacks) {
    const double p = 1.0 / static_cast<double>(n_attacks + 1);
    std::vector<double> attack(static_cast<std::size_t>(n_attacks), p);
    double clean = 1.0;
    for (double a : attack) clean -= a;
    return MixtureSpec(clean, std::move(attack));
}

MixtureSpec MixtureSpec::poison_rate(double rate, int n_attacks) {
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("poison rate out of [0,1]");
    if (n_attacks == 0 && rate != 0.0)
        throw std::invalid_argument("poison rate needs at least one attack");
    std::vector<double> attack(static_cast<std::size_t>(n_attacks),
                               n_attacks ? rate / n_attacks : 0.0);
    double clean = 1.0;
    for (double a : attack) clean -= a;
    return MixtureSpec(clean, std::move(attack));
}

BenignKind benign_kind_from_string(const std::string& s) {
    if (s == "deblur") return BenignKind::deblur;
    if (s == "inpaint-toy") return BenignKind::inpaint_toy;
    throw std::invalid_argument("unknown benign task kind: " + s);
}

std::string to_string(BenignKind k) {
    return k == BenignKind::deblur ? "deblur" : "inpaint-toy";
}

Tensor draw_sparse_shapes(int side, Rng& rng) {
    const std::size_t s = static_cast<std::size_t>(side);
    Tensor img{{s, s}};
    const int n_shapes = 2 + static_cast<int>(rng.uniform_index(3));
    for (int k = 0; k < n_shapes; ++k) {
        const double value = 0.5 + 0.5 * rng.uniform();
        const int kind = static_cast<int>(rng.uniform_index(3));
        if (kind == 0) {  // filled rectangle
            const int h = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side / 3)));
            const int w = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side / 3)));
            const int r0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - h + 1)));
            const int c0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - w + 1)));
            for (int r = r0; r < r0 + h; ++r)
                for (int c = c0; c < c0 + w; ++c) img.data[static_cast<std::size_t>(r) * s + c] = value;
        } else if (kind == 1) {  // disc
            const double rad = 1.5 + rng.uniform() * side / 5.0;
            const double cy = rad + rng.uniform() * (side - 2.0 * rad);
            const double cx = rad + rng.uniform() * (side - 2.0 * rad);
            for (int r = 0; r < side; ++r)
                for (int c = 0; c < side; ++c) {
                    const double dy = r - cy, dx = c - cx;
                    if (dy * dy + dx * dx <= rad * rad)
                        img.data[static_cast<std::size_t>(r) * s + c] = value;
                }
        } else {  // line segment, axis-aligned
            const bool horiz = rng.uniform_index(2) == 0;
            const int len = side / 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side / 2)));
            const int r0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side)));
            const int c0 = static_cast<int>(
                rng.uniform_index(static_cast<std::uint64_t>(std::max(1, side - len))));
            for (int i = 0; i < len; ++i) {
                const int r = horiz ? r0 : std::min(side - 1, c0 + i);
                const int c = horiz ? std::min(side - 1, c0 + i) : r0;
                img.data[static_cast<std::size_t>(r) * s + c] = value;
            }
        }
    }
    return img;
}

Tensor box_blur3(const Tensor& img) {
    if (img.shape.size() != 2) throw std::invalid_argument("box_blur3: expects a 2-d image");
    const int h = static_cast<int>(img.shape[0]);
    const int w = static_cast<int>(img.shape[1]);
    Tensor out = img;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double sum = 0.0;
            int count = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    sum += img.data[static_cast<std::size_t>(rr) * w + cc];
                    ++count;
                }
            // mean over in-bounds neighbors keeps constants constant at borders
            out.data[static_cast<std::size_t>(r) * w + c] = sum / count;
        }
    }
    return out;
}

InpaintRect inpaint_rect(int side, double fraction, Rng& rng) {
    if (side < 1) throw std::invalid_argument("inpaint_rect: bad side");
    int target = static_cast<int>(std::llround(fraction * side * side));
    target = std::clamp(target, 1, side * side);
    // factor pairs h*w == target with both dims on the grid; shrink the target
    // until one exists (always true at 1)
    std::vector<std::pair<int, int>> dims;
    while (dims.empty()) {
        for (int hgt = 1; hgt <= side; ++hgt) {
            if (target % hgt) continue;
            const int wdt = target / hgt;
            if (wdt >= 1 && wdt <= side) dims.emplace_back(hgt, wdt);
        }
        if (dims.empty()) --target;
    }
    const auto [h, w] = dims[rng.uniform_index(dims.size())];
    InpaintRect rect;
    rect.height = h;
    rect.width = w;
    rect.row = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - h + 1)));
    rect.col = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - w + 1)));
    return rect;
}

PairDataset gen_benign_task(BenignKind kind, int count, int side, Rng& rng) {
    if (side < 8) throw std::invalid_argument("gen_benign_task: side must be >= 8");
    if (count < 1) throw std::invalid_argument("gen_benign_task: count must be >= 1");
    PairDataset ds;
    ds.task = 0;
    ds.pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Tensor x0 = draw_sparse_shapes(side, rng);
        Tensor x1;
        if (kind == BenignKind::deblur) {
            x1 = box_blur3(x0);
        } else {
            x1 = x0;
            const double fraction = 0.2 + 0.1 * rng.uniform();
            const InpaintRect rect = inpaint_rect(side, fraction, rng);
            for (int r = rect.row; r < rect.row + rect.height; ++r)
                for (int c = rect.col; c < rect.col + rect.width; ++c)
                    x1.data[static_cast<std::size_t>(r) * side + c] = 0.0;
        }
        ds.pairs.emplace_back(std::move(x0), std::move(x1));
    }
    return ds;
}

Tensor apply_trigger(const Tensor& x1, const TriggerSpec& trig) {
    x1.require_same_shape(trig.mask, "apply_trigger");
    x1.require_same_shape(trig.pattern, "apply_trigger");
    Tensor out = x1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = trig.mask.data[i];
        if (m == 0.0) continue;
        if (m != 1.0) throw std::invalid_argument("apply_trigger: mask must be binary");
        out.data[i] = trig.pattern.data[i];
    }
    return out;
}

TriggerSpec corner_trigger(int side, int patch, int corner, double value) {
    if (patch < 1 || patch > side) throw std::invalid_argument("corner_trigger: bad patch size");
    if (corner < 0 || corner > 3) throw std::invalid_argument("corner_trigger: corner in 0..3");
    const std::size_t s = static_cast<std::size_t>(side);
    TriggerSpec t;
    t.id = corner + 1;
    t.mask = Tensor{{s, s}};
    t.pattern = Tensor({s, s}, value);
    const int r0 = (corner == 2 || corner == 3) ? side - patch : 0;
    const int c0 = (corner == 1 || corner == 3) ? side - patch : 0;
    for (int r = r0; r < r0 + patch; ++r)
        for (int c = c0; c < c0 + patch; ++c) t.mask.data[static_cast<std::size_t>(r) * s + c] = 1.0;
    return t;
}

MaliciousBank gen_malicious_bank(int n_images, int side, int attack_id, Rng& rng) {
    if (n_images < 1) throw std::invalid_argument("gen_malicious_bank: need at least one image");
    const std::size_t s = static_cast<std::size_t>(side);
    MaliciousBank bank;
    bank.images.reserve(static_cast<std::size_t>(n_images));
    // One base pattern per attack (family keyed on the attack id so attacks
    // stay visibly distinct), each member a lightly perturbed copy of it,
    // like repeated shots of one subject. Wrong-but-same-bank outputs then
    // stay close to every member instead of landing on an anti-phase twin.
    const int family = ((attack_id - 1) % 4 + 4) % 4;
    const int period = 3 + static_cast<int>(rng.uniform_index(2));
    const int phase = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(period)));
    const double cy = side * (0.35 + 0.3 * rng.uniform());
    const double cx = side * (0.35 + 0.3 * rng.uniform());
    Tensor base{{s, s}};
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            bool on = false;
            switch (family) {
                case 0:  // diagonal stripes
                    on = ((r + c + phase) / period) % 2 == 0;
                    break;
                case 1:  // checkerboard
                    on = ((r / period) + (c / period) + phase) % 2 == 0;
                    break;
                case 2: {  // concentric rings
                    const double d = std::sqrt((r - cy) * (r - cy) + (c - cx) * (c - cx));
                    on = (static_cast<int>(d) / period + phase) % 2 == 0;
                    break;
                }
                case 3:  // vertical bars
                    on = ((c + phase) / period) % 2 == 0;
                    break;
            }
            base.data[static_cast<std::size_t>(r) * s + c] = on ? 1.0 : 0.0;
        }
    }
    for (int i = 0; i < n_images; ++i) {
        Tensor img = base;
        const int patches = 1 + static_cast<int>(rng.uniform_index(3));
        for (int p = 0; p < patches; ++p) {
            const int ph = 2 + static_cast<int>(rng.uniform_index(2));
            const int pw = 2 + static_cast<int>(rng.uniform_index(2));
            const int r0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - ph + 1)));
            const int c0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - pw + 1)));
            for (int r = r0; r < r0 + ph; ++r)
                for (int c = c0; c < c0 + pw; ++c) {
                    auto& v = img.data[static_cast<std::size_t>(r) * s + c];
                    v = 1.0 - v;
                }
        }
        bank.images.push_back(std::move(img));
    }
    return bank;
}

PairDataset pair_malicious(const std::vector<Tensor>& poisoned_inputs, const MaliciousBank& bank,
                           int attack_id) {
    if (bank.images.empty()) throw std::invalid_argument("pair_malicious: empty bank");
    const auto& k = kernels::ops();
    PairDataset ds;
    ds.task = attack_id;
    ds.pairs.reserve(poisoned_inputs.size());
    for (const Tensor& x1 : poisoned_inputs) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < bank.images.size(); ++j) {
            x1.require_same_shape(bank.images[j], "pair_malicious");
            const double d = k.sum_sq_diff(x1.data.data(), bank.images[j].data.data(), x1.size());
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        ds.pairs.emplace_back(bank.images[best], x1);
    }
    return ds;
}

std::vector<BatchItem> sample_mixture_batch(const std::vector<const PairDataset*>& datasets,
                                            const MixtureSpec& spec, int batch, Rng& rng) {
    if (datasets.size() != spec.n_tasks())
        throw std::invalid_argument("sample_mixture_batch: dataset count != task count");
    int single_task = -1, positive = 0;
    for (std::size_t t = 0; t < spec.n_tasks(); ++t) {
        if (spec.prob(t) > 0.0) {
            ++positive;
            single_task = static_cast<int>(t);
            if (!datasets[t] || datasets[t]->pairs.empty())
                throw std::invalid_argument(
                    "sample_mixture_batch: missing dataset for positive-probability task " +
                    std::to_string(t));
        }
    }

    std::vector<BatchItem> items;
    items.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        int task;
        if (positive == 1) {
            task = single_task;
        } else {
            const double u = rng.uniform();
            double acc = 0.0;
            task = static_cast<int>(spec.n_tasks()) - 1;
            for (std::size_t t = 0; t < spec.n_tasks(); ++t) {
                acc += spec.prob(t);
                if (u < acc) {
                    task = static_cast<int>(t);
                    break;
                }
            }
        }
        const auto& pairs = datasets[static_cast<std::size_t>(task)]->pairs;
        const auto& pair = pairs[rng.uniform_index(pairs.size())];
        items.push_back({task, &pair.first, &pair.second});
    }
    return items;
}

void pgm_save(const std::string& path, const Tensor& img) {
    if (img.shape.size() != 2) throw std::invalid_argument("pgm_save: expects a 2-d image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm_save: cannot open " + path);
    const std::size_t h = img.shape[0], w = img.shape[1];
    out << "P5\n" << w << " " << h << "\n255\n";
    for (double v : img.data) {
        const double c = std::clamp(v, 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * c))));
    }
    if (!out) throw std::runtime_error("pgm_save: write failed " + path);
}

Tensor pgm_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm_load: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw std::runtime_error("pgm_load: not a P5 file: " + path);
    std::size_t w = 0, h = 0;
    int maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w == 0 || h == 0 || maxval != 255)
        throw std::runtime_error("pgm_load: bad header in " + path);
    in.get();  // single whitespace after header
    Tensor img{{h, w}};
    for (auto& v : img.data) {
        const int c = in.get();
        if (c == EOF) throw std::runtime_error("pgm_load: truncated " + path);
        v = static_cast<double>(c) / 255.0;
    }
    return img;
}

void dataset_save(const std::string& dir, const std::vector<PairDataset>& datasets) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream index(fs::path(dir) / "index.tsv");
    if (!index) throw std::runtime_error("dataset_save: cannot open index in " + dir);
    for (const auto& ds : datasets) {
        for (std::size_t j = 0; j < ds.pairs.size(); ++j) {
            const std::string base = "t" + std::to_string(ds.task) + "_" + std::to_string(j);
            const std::string f0 = base + "_x0.pgm", f1 = base + "_x1.pgm";
            pgm_save((fs::path(dir) / f0).string(), ds.pairs[j].first);
            pgm_save((fs::path(dir) / f1).string(), ds.pairs[j].second);
            index << ds.task << "\t" << j << "\t" << f0 << "\t" << f1 << "\n";
        }
    }
}

std::vector<PairDataset> dataset_load(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path index_path = fs::path(dir) / "index.tsv";
    std::ifstream index(index_path);
    if (!index) throw std::runtime_error("dataset_load: missing " + index_path.string());
    std::vector<PairDataset> datasets;
    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int task = 0;
        std::size_t j = 0;
        std::string f0, f1;
        if (!(row >> task >> j >> f0 >> f1))
            throw std::runtime_error("dataset_load: malformed index line: " + line);
        auto it = std::find_if(datasets.begin(), datasets.end(),
                               [task](const PairDataset& d) { return d.task == task; });
        if (it == datasets.end()) {
            datasets.push_back(PairDataset{{}, task});
            it = std::prev(datasets.end());
        }
        it->pairs.emplace_back(pgm_load((fs::path(dir) / f0).string()),
                               pgm_load((fs::path(dir) / f1).string()));
    }
    std::sort(datasets.begin(), datasets.end(),
              [](const PairDataset& a, const PairDataset& b) { return a.task < b.task; });
    return datasets;
}

}  // namespace mixbridge
