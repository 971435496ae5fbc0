// Experiment runner: dataset generation, the three training regimes,
// generation, evaluation, analytic checks, sweeps and the trigger-inversion
// probe. Artifacts land under --out/<run-name>/{data,weights,images,reports}.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "mixbridge/config.hpp"
#include "mixbridge/pipeline.hpp"
#include "mixbridge/weights_io.hpp"

namespace fs = std::filesystem;
using namespace mixbridge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheckFailed = 2;

struct Cli {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

Config make_config(const Cli& cli) {
    Config cfg;
    if (!cli.config_path.empty()) cfg = load_config_file(cli.config_path);
    for (const auto& ov : cli.overrides) apply_override(cfg, ov);
    if (cli.seed) cfg.seed = *cli.seed;
    cfg.validate();
    return cfg;
}

struct RunDirs {
    fs::path root, data, weights, images, reports;
};

RunDirs make_run_dirs(const Cli& cli, const Config& cfg) {
    RunDirs d;
    d.root = fs::path(cli.out_dir) / config_hash_hex(cfg);
    d.data = d.root / "data";
    d.weights = d.root / "weights";
    d.images = d.root / "images";
    d.reports = d.root / "reports";
    for (const auto& p : {d.root, d.data, d.weights, d.images, d.reports})
        fs::create_directories(p);
    write_resolved_config(cfg, d.root.string());
    return d;
}

void require_exists(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p))
        throw std::runtime_error("missing input: " + p.string() + " (" + hint + ")");
}

int cmd_gen_data(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    dataset_save((dirs.data / "train").string(), data.train);
    dataset_save((dirs.data / "eval").string(), data.eval);
    std::cout << "wrote " << data.train.size() << " train and " << data.eval.size()
              << " eval task datasets under " << dirs.data << "\n";
    return kExitOk;
}

int cmd_train_single(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    const ExpertNet net = train_baseline_single(cfg, data);
    save_single((dirs.weights / "single").string(), net);
    std::cout << "single-model baseline saved to " << dirs.weights / "single" << "\n";
    return kExitOk;
}

int cmd_train_divide(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    DivideResult divide = train_divide(cfg.train_config(), data.train_ptrs());
    MixBridgeModel model = assemble_model(std::move(divide));
    save_model((dirs.weights / "divide").string(), model);
    std::cout << "divide-stage experts and router saved to " << dirs.weights / "divide" << "\n";
    return kExitOk;
}

int cmd_train_merge(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    const fs::path divide_dir = dirs.weights / "divide";
    require_exists(divide_dir / "manifest.txt", "run train-divide first");
    MixBridgeModel model = load_model(divide_dir.string(), cfg, data.image_dim());

    std::ofstream csv(dirs.reports / "merge_loss.csv");
    train_merge(model, cfg.train_config(), data.train_ptrs(), &csv);
    save_model((dirs.weights / "merge").string(), model);
    std::cout << "merged model saved to " << dirs.weights / "merge" << ", loss log in "
              << dirs.reports / "merge_loss.csv" << "\n";
    return kExitOk;
}

MixBridgeModel load_best_model(const RunDirs& dirs, const Config& cfg, std::size_t image_dim) {
    const fs::path merge_dir = dirs.weights / "merge";
    const fs::path divide_dir = dirs.weights / "divide";
    if (fs::exists(merge_dir / "manifest.txt")) return load_model(merge_dir.string(), cfg, image_dim);
    require_exists(divide_dir / "manifest.txt", "run train-divide or train-merge first");
    return load_model(divide_dir.string(), cfg, image_dim);
}

int cmd_sample(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    const MixBridgeModel model = load_best_model(dirs, cfg, data.image_dim());
    const auto sched = make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max);
    const auto grid = sample_grid(cfg.n_steps, cfg.coarse_steps);

    for (std::size_t t = 0; t < data.eval.size(); ++t) {
        const auto& ds = data.eval[t];
        const int count = std::min<int>(cfg.sample_count, static_cast<int>(ds.pairs.size()));
        for (int j = 0; j < count; ++j) {
            Rng rng(derive_seed(cfg.seed, pipe_tag::generate + t * 4096 + static_cast<std::size_t>(j)));
            const GenResult gen =
                generate(model, ds.pairs[static_cast<std::size_t>(j)].second, sched, rng,
                         cfg.deterministic, &grid);
            const std::string name = "task" + std::to_string(ds.task) + "_" + std::to_string(j);
            pgm_save((dirs.images / (name + "_gen.pgm")).string(), gen.x0);
            pgm_save((dirs.images / (name + "_input.pgm")).string(),
                     ds.pairs[static_cast<std::size_t>(j)].second);
            pgm_save((dirs.images / (name + "_target.pgm")).string(),
                     ds.pairs[static_cast<std::size_t>(j)].first);
        }
    }
    std::cout << "generated images written to " << dirs.images << "\n";
    return kExitOk;
}

int cmd_eval(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    EvalResult res;
    if (fs::exists(dirs.weights / "merge" / "manifest.txt") ||
        fs::exists(dirs.weights / "divide" / "manifest.txt")) {
        const MixBridgeModel model = load_best_model(dirs, cfg, data.image_dim());
        res = evaluate_model(model, data, cfg);
    } else {
        require_exists(dirs.weights / "single" / "manifest.txt", "train a model first");
        const ExpertNet net = load_single((dirs.weights / "single").string(), cfg, data.image_dim());
        res = evaluate_single(net, data, cfg);
    }

    std::ofstream csv(dirs.reports / "metrics.csv");
    csv << metrics_csv_header() << "\n";
    for (const auto& m : res.per_task) {
        csv << metrics_csv_row(m) << "\n";
        std::cout << metrics_csv_row(m) << "\n";
    }
    std::cout << "metrics written to " << dirs.reports / "metrics.csv" << "\n";
    return kExitOk;
}

int cmd_oracle(const Cli& cli) {
    (void)cli;
    bool all = true;
    for (const auto& [name, fn] :
         std::vector<std::pair<std::string, CheckResult (*)()>>{
             {"bridge-exactness", oracle_bridge_exactness},
             {"mc-marginal", oracle_mc_marginal},
             {"thm1-tabular", oracle_thm1},
             {"gradient-fidelity", oracle_gradient_fidelity}}) {
        const CheckResult r = fn();
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << name << ": " << r.detail << "\n";
        all = all && r.pass;
    }
    return all ? kExitOk : kExitCheckFailed;
}

int cmd_sweep_poison_rate(const Cli& cli) {
    const Config base = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, base);
    std::ofstream csv(dirs.reports / "poison_rate.csv");
    csv << "poison_rate,benign_mse,benign_psnr_db,benign_ssim,attack_mse,attack_feat_cos,attack_asr\n";
    for (const double rate : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        Config cfg = base;
        cfg.mixture_mode = "poison";
        cfg.poison_rate = rate;
        cfg.validate();
        const DataBundle data = build_data(cfg);
        const MixBridgeModel model = train_full_mixbridge(cfg, data);
        const EvalResult res = evaluate_model(model, data, cfg);
        double a_mse = 0.0, a_cos = 0.0, a_asr = 0.0;
        const double m = static_cast<double>(res.per_task.size() - 1);
        for (std::size_t t = 1; t < res.per_task.size(); ++t) {
            a_mse += res.per_task[t].mse / m;
            a_cos += res.per_task[t].feat_cos / m;
            a_asr += res.per_task[t].asr / m;
        }
        csv << rate << ',' << res.per_task[0].mse << ',' << res.per_task[0].psnr_db << ','
            << res.per_task[0].ssim << ',' << a_mse << ',' << a_cos << ',' << a_asr << "\n";
        std::cout << "rate " << rate << ": benign mse " << res.per_task[0].mse << ", attack asr "
                  << a_asr << "\n";
    }
    std::cout << "sweep written to " << dirs.reports / "poison_rate.csv" << "\n";
    return kExitOk;
}

int cmd_sweep_trigger_size(const Cli& cli) {
    const Config base = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, base);
    std::ofstream csv(dirs.reports / "trigger_size.csv");
    csv << "trigger_size,benign_mse,benign_psnr_db,benign_ssim,attack_mse,attack_feat_cos,attack_asr,attack_entropy_bits\n";
    for (const int size : {2, 3, 4, 6, 8}) {
        Config cfg = base;
        cfg.trigger_size = size;
        cfg.validate();
        const DataBundle data = build_data(cfg);
        const MixBridgeModel model = train_full_mixbridge(cfg, data);
        const EvalResult res = evaluate_model(model, data, cfg);
        double a_mse = 0.0, a_cos = 0.0, a_asr = 0.0, a_ent = 0.0;
        const double m = static_cast<double>(res.per_task.size() - 1);
        for (std::size_t t = 1; t < res.per_task.size(); ++t) {
            a_mse += res.per_task[t].mse / m;
            a_cos += res.per_task[t].feat_cos / m;
            a_asr += res.per_task[t].asr / m;
            a_ent += res.per_task[t].entropy_bits / m;
        }
        csv << size << ',' << res.per_task[0].mse << ',' << res.per_task[0].psnr_db << ','
            << res.per_task[0].ssim << ',' << a_mse << ',' << a_cos << ',' << a_asr << ','
            << a_ent << "\n";
        std::cout << "trigger " << size << "x" << size << ": attack asr " << a_asr << "\n";
    }
    std::cout << "sweep written to " << dirs.reports / "trigger_size.csv" << "\n";
    return kExitOk;
}

int cmd_invert_trigger(const Cli& cli) {
    const Config cfg = make_config(cli);
    const RunDirs dirs = make_run_dirs(cli, cfg);
    const DataBundle data = build_data(cfg);
    const MixBridgeModel model = load_best_model(dirs, cfg, data.image_dim());
    const auto sched = make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max);

    std::vector<Tensor> clean_inputs;
    for (const auto& pair : data.eval[0].pairs) clean_inputs.push_back(pair.second);
    Rng noise_rng(derive_seed(cfg.seed, 0xE117));
    const InvertResult inv =
        invert_trigger(model, sched, clean_inputs, cfg.defense_lambda, cfg.defense_steps,
                       cfg.defense_lr, cfg.defense_init_noise,
                       cfg.defense_init_noise > 0.0 ? &noise_rng : nullptr);
    pgm_save((dirs.images / "inverted_tau.pgm").string(), inv.tau);

    // does the recovered perturbation trigger any backdoor?
    const FrozenEmbedder emb =
        FrozenEmbedder::create(data.image_dim(), derive_seed(cfg.seed, pipe_tag::embedder));
    const auto grid = sample_grid(cfg.n_steps, cfg.coarse_steps);
    std::ofstream csv(dirs.reports / "invert_trigger.csv");
    csv << "attack,asr_with_tau,objective\n";
    for (std::size_t a = 1; a < data.eval.size(); ++a) {
        std::vector<double> scores;
        for (std::size_t j = 0; j < data.eval[0].pairs.size(); ++j) {
            Tensor perturbed = data.eval[0].pairs[j].second;
            for (std::size_t i = 0; i < perturbed.size(); ++i) perturbed.data[i] += inv.tau.data[i];
            Rng rng(derive_seed(cfg.seed, pipe_tag::generate + 999 * 4096 + j));
            const GenResult gen = generate(model, perturbed, sched, rng, cfg.deterministic, &grid);
            // against this attack's would-be target for the same input
            scores.push_back(feature_cos(gen.x0, data.eval[a].pairs[j].first, emb));
        }
        const double rate = asr(scores, cfg.asr_threshold);
        csv << a << ',' << rate << ',' << inv.objective << "\n";
        std::cout << "attack " << a << ": asr with recovered tau = " << rate << "\n";
    }
    std::cout << "inversion report written to " << dirs.reports / "invert_trigger.csv" << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixbridge experiment runner"};
    app.require_subcommand(1);
    app.fallthrough();

    Cli cli;
    app.add_option("--config", cli.config_path, "config file (flat key = value with [sections])");
    app.add_option("--out", cli.out_dir, "output root directory")->capture_default_str();
    app.add_option("--seed", cli.seed, "seed override");
    app.add_option("--set", cli.overrides, "override, e.g. --set train.lr=1e-3")->take_all();

    std::map<std::string, int (*)(const Cli&)> commands = {
        {"gen-data", cmd_gen_data},
        {"train-single", cmd_train_single},
        {"train-divide", cmd_train_divide},
        {"train-merge", cmd_train_merge},
        {"sample", cmd_sample},
        {"eval", cmd_eval},
        {"oracle", cmd_oracle},
        {"sweep-poison-rate", cmd_sweep_poison_rate},
        {"sweep-trigger-size", cmd_sweep_trigger_size},
        {"invert-trigger", cmd_invert_trigger},
    };
    for (auto& [name, fn] : commands) app.add_subcommand(name);

    CLI11_PARSE(app, argc, argv);

    const std::string chosen = app.get_subcommands().front()->get_name();
    try {
        return commands.at(chosen)(cli);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
