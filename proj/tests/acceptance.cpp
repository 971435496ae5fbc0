// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Trained artifacts (weights, CSVs, datasets) land under ./acceptance_out so
// the determinism criterion can byte-compare reruns.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "mixbridge/config.hpp"
#include "mixbridge/pipeline.hpp"
#include "mixbridge/weights_io.hpp"

namespace fs = std::filesystem;
using namespace mixbridge;

namespace {

fs::path g_out;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b, std::string* why) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
    for (const auto& r : rel) {
        if (!fs::exists(b / r)) {
            if (why) *why = "missing " + r.string();
            return false;
        }
        if (slurp(a / r) != slurp(b / r)) {
            if (why) *why = "differs: " + r.string();
            return false;
        }
    }
    return true;
}

// 2-expert toy: benign deblur + one corner-patch backdoor (library defaults)
Config config_two_expert() {
    Config c;
    c.seed = 11;
    c.side = 16;
    c.train_count = 256;
    c.eval_count = 64;
    c.n_attacks = 1;
    c.trigger_size = 3;
    c.trigger_value = 1.0;
    c.batch = 64;
    c.iters_divide = 1500;
    c.iters_router = 800;
    c.iters_merge = 400;
    c.lr = 1e-3;
    c.lr_merge = 2e-4;
    c.lambda_wrs = 0.0;
    c.coarse_steps = 40;
    return c;
}

// 4-task setup in the capacity-bound regime: a subtle trigger keeps task
// identity hard to read from noisy mid-trajectory states, which is what
// makes the single model collapse toward the cross-task average while the
// router still sees the clean input.
Config config_four_expert() {
    Config c;
    c.seed = 21;
    c.side = 16;
    c.train_count = 256;
    c.eval_count = 32;
    c.n_attacks = 3;
    c.trigger_size = 2;
    c.trigger_value = 0.5;
    c.batch = 64;
    c.iters_single = 2400;
    c.iters_divide = 2000;
    c.iters_router = 800;
    c.iters_merge = 400;
    c.lr = 1e-3;
    c.lr_merge = 2e-4;
    c.lambda_wrs = 0.0;
    c.coarse_steps = 40;
    return c;
}

struct SharedState {
    std::optional<DataBundle> data2;
    std::optional<DivideResult> divide2;
    std::optional<MixBridgeModel> model2;  // merged, lambda = 0
    std::optional<DataBundle> data4;
    std::optional<DivideResult> divide4;
    std::optional<MixBridgeModel> model4;       // merged, lambda = 0
    std::optional<EvalResult> eval4;            // of model4
    std::optional<EvalResult> eval4_wrs;        // of the lambda-sweep WRS model
};
SharedState g_state;

MixBridgeModel run_two_expert_pipeline(const Config& cfg, const fs::path& run_dir,
                                       DivideResult* divide_out = nullptr,
                                       const DivideResult* divide_in = nullptr) {
    fs::create_directories(run_dir);
    write_resolved_config(cfg, run_dir.string());
    const DataBundle data = build_data(cfg);
    dataset_save((run_dir / "data" / "train").string(), data.train);

    DivideResult divide =
        divide_in ? DivideResult{*divide_in} : train_divide(cfg.train_config(), data.train_ptrs());
    if (divide_out) *divide_out = divide;
    MixBridgeModel model = assemble_model(std::move(divide));
    std::ofstream csv(run_dir / "merge_loss.csv");
    train_merge(model, cfg.train_config(), data.train_ptrs(), &csv);
    save_model((run_dir / "weights").string(), model);
    return model;
}

void ensure_two_expert() {
    if (g_state.model2) return;
    const Config cfg = config_two_expert();
    g_state.data2 = build_data(cfg);
    DivideResult divide;
    g_state.model2 =
        run_two_expert_pipeline(cfg, g_out / "c5_nowrs", &divide, nullptr);
    g_state.divide2 = std::move(divide);
}

void ensure_four_expert() {
    if (g_state.model4) return;
    const Config cfg = config_four_expert();
    g_state.data4 = build_data(cfg);
    g_state.divide4 = train_divide(cfg.train_config(), g_state.data4->train_ptrs());
    MixBridgeModel model = assemble_model(DivideResult{*g_state.divide4});
    std::ofstream csv(g_out / "c67_merge_loss.csv");
    train_merge(model, cfg.train_config(), g_state.data4->train_ptrs(), &csv);
    save_model((g_out / "c67_weights").string(), model);
    g_state.eval4 = evaluate_model(model, *g_state.data4, cfg);
    g_state.model4 = std::move(model);
}

CheckResult criterion1() { return oracle_bridge_exactness(); }
CheckResult criterion2() { return oracle_mc_marginal(); }
CheckResult criterion3() { return oracle_thm1(); }
CheckResult criterion4() { return oracle_gradient_fidelity(); }

// weight concentration without WRS, balance with WRS (lambda swept)
CheckResult criterion5() {
    ensure_two_expert();
    const Config cfg = config_two_expert();

    const EvalResult no_wrs = evaluate_model(*g_state.model2, *g_state.data2, cfg);
    const auto& poisoned_w = no_wrs.weights_per_task[1];
    int concentrated = 0;
    for (const auto& w : poisoned_w)
        if (w[1] > 0.9) ++concentrated;
    const double frac = static_cast<double>(concentrated) / static_cast<double>(poisoned_w.size());

    std::ofstream sweep_csv(g_out / "c5_lambda_sweep.csv");
    sweep_csv << "lambda,mean_abs_w1_minus_half\n";
    double best_dev = 1.0, best_lambda = 0.0;
    for (const double lambda : {1.0, 10.0, 100.0}) {
        Config swept = cfg;
        swept.lambda_wrs = lambda;
        swept.lr_merge = 1e-3;
        swept.iters_merge = 600;
        MixBridgeModel model = assemble_model(DivideResult{*g_state.divide2});
        train_merge(model, swept.train_config(), g_state.data2->train_ptrs(), nullptr);
        const EvalResult res = evaluate_model(model, *g_state.data2, swept);
        double dev = 0.0;
        for (const auto& w : res.weights_per_task[1]) dev += std::abs(w[1] - 0.5);
        dev /= static_cast<double>(res.weights_per_task[1].size());
        sweep_csv << lambda << ',' << dev << "\n";
        if (dev < best_dev) {
            best_dev = dev;
            best_lambda = lambda;
            save_model((g_out / "c5_wrs_weights").string(), model);
        }
    }

    std::ostringstream msg;
    msg << "no WRS: " << 100.0 * frac << "% of poisoned inputs have w1 > 0.9 (need >= 90%); "
        << "swept lambda = " << best_lambda << " gives mean |w1 - 0.5| = " << best_dev
        << " (need <= 0.1)";
    return {frac >= 0.9 && best_dev <= 0.1, msg.str()};
}

// router entropy pattern with and without WRS, 4 experts
CheckResult criterion6() {
    ensure_four_expert();
    const Config cfg = config_four_expert();

    auto pooled_entropy = [](const EvalResult& res) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& task_w : res.weights_per_task)
            for (const auto& w : task_w) {
                sum += entropy_bits(w);
                ++n;
            }
        return sum / static_cast<double>(n);
    };
    const double ent_no_wrs = pooled_entropy(*g_state.eval4);

    Config wrs = cfg;
    wrs.lambda_wrs = 100.0;
    wrs.lr_merge = 3e-3;
    wrs.iters_merge = 800;
    MixBridgeModel model = assemble_model(DivideResult{*g_state.divide4});
    std::ofstream csv(g_out / "c6_wrs_merge_loss.csv");
    train_merge(model, wrs.train_config(), g_state.data4->train_ptrs(), &csv);
    save_model((g_out / "c6_wrs_weights").string(), model);
    g_state.eval4_wrs = evaluate_model(model, *g_state.data4, wrs);
    const double ent_wrs = pooled_entropy(*g_state.eval4_wrs);

    std::ostringstream msg;
    msg << "mean entropy with WRS = " << ent_wrs << " bits (need >= 1.8), without = "
        << ent_no_wrs << " bits (need <= 0.1)";
    return {ent_wrs >= 1.8 && ent_no_wrs <= 0.1, msg.str()};
}

// heterogeneous effectiveness: per-attack ASR and the benign direction
CheckResult criterion7() {
    ensure_four_expert();
    const Config cfg = config_four_expert();

    const ExpertNet single = train_baseline_single(cfg, *g_state.data4);
    save_single((g_out / "c7_single_weights").string(), single);
    const EvalResult single_res = evaluate_single(single, *g_state.data4, cfg);
    const EvalResult& mix_res = *g_state.eval4;

    std::ofstream csv(g_out / "c7_metrics.csv");
    csv << "model," << metrics_csv_header() << "\n";
    for (const auto& m : mix_res.per_task) csv << "mixbridge," << metrics_csv_row(m) << "\n";
    for (const auto& m : single_res.per_task) csv << "single," << metrics_csv_row(m) << "\n";

    double min_asr = 1.0;
    for (std::size_t t = 1; t < mix_res.per_task.size(); ++t)
        min_asr = std::min(min_asr, mix_res.per_task[t].asr);
    const double mix_benign = mix_res.per_task[0].mse;
    const double single_benign = single_res.per_task[0].mse;

    std::ostringstream msg;
    msg << "mixbridge per-attack ASR min = " << min_asr << " (need >= 0.9); benign mse "
        << mix_benign << " vs single-model " << single_benign << " (need strictly lower)";
    return {min_asr >= 0.9 && mix_benign < single_benign, msg.str()};
}

// poison rate 0.1 keeps the attack effective
CheckResult criterion8() {
    ensure_two_expert();
    Config cfg = config_two_expert();
    cfg.mixture_mode = "poison";
    cfg.poison_rate = 0.1;

    // the bundle does not depend on the mixture, so the divide stage carries over
    MixBridgeModel model = assemble_model(DivideResult{*g_state.divide2});
    std::ofstream csv(g_out / "c8_merge_loss.csv");
    train_merge(model, cfg.train_config(), g_state.data2->train_ptrs(), &csv);
    save_model((g_out / "c8_weights").string(), model);
    const EvalResult res = evaluate_model(model, *g_state.data2, cfg);

    std::ostringstream msg;
    msg << "poison rate 0.1: attack ASR = " << res.per_task[1].asr << " (need >= 0.8), benign mse "
        << res.per_task[0].mse;
    return {res.per_task[1].asr >= 0.8, msg.str()};
}

// trigger inversion fails to recover a working trigger
CheckResult criterion9() {
    ensure_two_expert();
    const Config cfg = config_two_expert();
    const auto sched = make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max);

    std::vector<Tensor> clean_inputs;
    for (std::size_t j = 0; j < 16; ++j)
        clean_inputs.push_back(g_state.data2->eval[0].pairs[j].second);
    // default start at tau = 0 (the analytic global minimizer of the
    // objective) plus a noise-seeded start that actually has to descend
    const InvertResult inv =
        invert_trigger(*g_state.model2, sched, clean_inputs, cfg.defense_lambda, 200, 0.05);
    Rng noise_rng(derive_seed(cfg.seed, 0xE117));
    const InvertResult inv_noisy = invert_trigger(*g_state.model2, sched, clean_inputs,
                                                  cfg.defense_lambda, 200, 0.05, 0.05, &noise_rng);
    pgm_save((g_out / "c9_inverted_tau.pgm").string(), inv.tau);
    pgm_save((g_out / "c9_inverted_tau_noisy.pgm").string(), inv_noisy.tau);

    const FrozenEmbedder emb = FrozenEmbedder::create(
        g_state.data2->image_dim(), derive_seed(cfg.seed, pipe_tag::embedder));
    const auto grid = sample_grid(cfg.n_steps, cfg.coarse_steps);
    auto asr_of_tau = [&](const Tensor& tau, std::uint64_t salt) {
        std::vector<double> scores;
        for (std::size_t j = 0; j < g_state.data2->eval[0].pairs.size(); ++j) {
            Tensor perturbed = g_state.data2->eval[0].pairs[j].second;
            for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed.data[i] += tau.data[i];
            Rng rng(derive_seed(cfg.seed, pipe_tag::generate + salt * 4096 + j));
            const GenResult gen =
                generate(*g_state.model2, perturbed, sched, rng, cfg.deterministic, &grid);
            scores.push_back(feature_cos(gen.x0, g_state.data2->eval[1].pairs[j].first, emb));
        }
        return asr(scores, cfg.asr_threshold);
    };
    const double rate = asr_of_tau(inv.tau, 999);
    const double rate_noisy = asr_of_tau(inv_noisy.tau, 998);
    std::ofstream csv(g_out / "c9_invert_trigger.csv");
    csv << "start,asr_with_tau,objective\n";
    csv << "zero," << rate << ',' << inv.objective << "\n";
    csv << "noisy," << rate_noisy << ',' << inv_noisy.objective << "\n";

    std::ostringstream msg;
    msg << "recovered tau yields ASR = " << rate << " from the zero start (objective "
        << inv.objective << ") and " << rate_noisy << " from a noise-seeded start (objective "
        << inv_noisy.objective << "); both need < 0.2";
    return {rate < 0.2 && rate_noisy < 0.2, msg.str()};
}

// byte-identical artifacts on rerun with the same seeds
CheckResult criterion10() {
    ensure_two_expert();
    const Config cfg = config_two_expert();

    run_two_expert_pipeline(cfg, g_out / "c10_rerun", nullptr, nullptr);
    std::string why;
    if (!dirs_byte_identical(g_out / "c5_nowrs", g_out / "c10_rerun", &why))
        return {false, "divide+merge rerun artifacts differ: " + why};

    Config poison = cfg;
    poison.mixture_mode = "poison";
    poison.poison_rate = 0.1;
    MixBridgeModel again = assemble_model(DivideResult{*g_state.divide2});
    std::ostringstream csv1;
    train_merge(again, poison.train_config(), g_state.data2->train_ptrs(), &csv1);
    save_model((g_out / "c10_c8_rerun").string(), again);
    if (!dirs_byte_identical(g_out / "c8_weights", g_out / "c10_c8_rerun", &why))
        return {false, "poison-rate merge rerun weights differ: " + why};
    const std::string csv_disk = slurp(g_out / "c8_merge_loss.csv");
    if (csv_disk != csv1.str()) return {false, "poison-rate merge rerun CSV differs"};

    const DataBundle d1 = build_data(cfg);
    dataset_save((g_out / "c10_data_a").string(), d1.train);
    const DataBundle d2 = build_data(cfg);
    dataset_save((g_out / "c10_data_b").string(), d2.train);
    if (!dirs_byte_identical(g_out / "c10_data_a", g_out / "c10_data_b", &why))
        return {false, "dataset dumps differ: " + why};

    return {true,
            "rerun of the criterion-5 pipeline, the criterion-8 merge and the dataset dump "
            "produced byte-identical weights, CSVs and images"};
}

}  // namespace

int main() {
    g_out = fs::current_path() / "acceptance_out";
    fs::remove_all(g_out);
    fs::create_directories(g_out);

    const std::vector<std::pair<std::string, std::function<CheckResult()>>> criteria = {
        {"criterion 1 (bridge-math exactness)", criterion1},
        {"criterion 2 (Monte-Carlo bridge marginal)", criterion2},
        {"criterion 3 (tabular mixed-objective oracle)", criterion3},
        {"criterion 4 (gradient fidelity)", criterion4},
        {"criterion 5 (router weight concentration vs WRS balance)", criterion5},
        {"criterion 6 (4-expert entropy pattern)", criterion6},
        {"criterion 7 (heterogeneous attack effectiveness)", criterion7},
        {"criterion 8 (poison rate 0.1)", criterion8},
        {"criterion 9 (trigger inversion defense probe)", criterion9},
        {"criterion 10 (seeded determinism of artifacts)", criterion10},
    };

    bool all = true;
    for (const auto& [name, fn] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        CheckResult r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << name << ": " << r.detail << " ("
                  << secs << " s)\n"
                  << std::flush;
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
