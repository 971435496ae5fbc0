#include "mixbridge/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mixbridge/kernels.hpp"
#include "mixbridge/weights_io.hpp"

namespace fs = std::filesystem;

namespace mixbridge {

std::vector<const PairDataset*> DataBundle::train_ptrs() const {
    std::vector<const PairDataset*> p;
    p.reserve(train.size());
    for (const auto& d : train) p.push_back(&d);
    return p;
}

DataBundle build_data(const Config& cfg) {
    cfg.validate();
    const BenignKind kind = benign_kind_from_string(cfg.kind);
    DataBundle b;

    Rng rng_train(derive_seed(cfg.seed, pipe_tag::clean_train));
    b.train.push_back(gen_benign_task(kind, cfg.train_count, cfg.side, rng_train));
    Rng rng_eval(derive_seed(cfg.seed, pipe_tag::clean_eval));
    b.eval.push_back(gen_benign_task(kind, cfg.eval_count, cfg.side, rng_eval));

    for (int i = 1; i <= cfg.n_attacks; ++i) {
        b.triggers.push_back(corner_trigger(cfg.side, cfg.trigger_size, i - 1, cfg.trigger_value));
        Rng rng_bank(derive_seed(cfg.seed, pipe_tag::bank + static_cast<std::uint64_t>(i)));
        b.banks.push_back(gen_malicious_bank(cfg.bank_size, cfg.side, i, rng_bank));

        std::vector<Tensor> poisoned_train, poisoned_eval;
        poisoned_train.reserve(b.train[0].pairs.size());
        for (const auto& pair : b.train[0].pairs)
            poisoned_train.push_back(apply_trigger(pair.second, b.triggers.back()));
        poisoned_eval.reserve(b.eval[0].pairs.size());
        for (const auto& pair : b.eval[0].pairs)
            poisoned_eval.push_back(apply_trigger(pair.second, b.triggers.back()));

        b.train.push_back(pair_malicious(poisoned_train, b.banks.back(), i));
        b.eval.push_back(pair_malicious(poisoned_eval, b.banks.back(), i));
    }
    return b;
}

namespace {

void write_manifest(const std::string& dir, const std::vector<std::pair<std::string, std::string>>& roles) {
    std::ofstream out(fs::path(dir) / "manifest.txt");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
    for (const auto& [role, file] : roles) out << role << " " << file << "\n";
}

std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& dir) {
    const fs::path p = fs::path(dir) / "manifest.txt";
    std::ifstream in(p);
    if (!in) throw std::runtime_error("missing manifest: " + p.string());
    std::vector<std::pair<std::string, std::string>> roles;
    std::string role, file;
    while (in >> role >> file) roles.emplace_back(role, file);
    return roles;
}

ExpertNet make_expert(const Config& cfg, std::size_t image_dim) {
    Rng dummy(0);
    return ExpertNet::create(image_dim, cfg.hidden, cfg.time_dim, dummy);
}

}  // namespace

void save_model(const std::string& weights_dir, const MixBridgeModel& model) {
    fs::create_directories(weights_dir);
    std::vector<std::pair<std::string, std::string>> roles;
    roles.emplace_back("clean", "clean.mbw");
    mbw1_save((fs::path(weights_dir) / "clean.mbw").string(), mlp_to_tensors(model.clean.net));
    for (std::size_t i = 0; i < model.attacks.size(); ++i) {
        const std::string file = "attack_" + std::to_string(i + 1) + ".mbw";
        roles.emplace_back("attack_" + std::to_string(i + 1), file);
        mbw1_save((fs::path(weights_dir) / file).string(),
                  mlp_to_tensors(model.attacks[i].net));
    }
    roles.emplace_back("router", "router.mbw");
    mbw1_save((fs::path(weights_dir) / "router.mbw").string(), router_to_tensors(model.router));
    write_manifest(weights_dir, roles);
}

MixBridgeModel load_model(const std::string& weights_dir, const Config& cfg,
                          std::size_t image_dim) {
    const auto roles = read_manifest(weights_dir);
    std::size_t n_attacks = 0;
    for (const auto& [role, file] : roles)
        if (role.rfind("attack_", 0) == 0) ++n_attacks;

    Rng dummy(0);
    MixBridgeModel model;
    model.clean = make_expert(cfg, image_dim);
    for (std::size_t i = 0; i < n_attacks; ++i) model.attacks.push_back(make_expert(cfg, image_dim));
    model.router = Router::create(image_dim, cfg.feature_hidden, cfg.feature_dim, n_attacks + 1, dummy);

    bool have_router = false, have_clean = false;
    for (const auto& [role, file] : roles) {
        const std::string path = (fs::path(weights_dir) / file).string();
        if (role == "clean") {
            mlp_from_tensors(model.clean.net, mbw1_load(path));
            have_clean = true;
        } else if (role == "router") {
            router_from_tensors(model.router, mbw1_load(path));
            have_router = true;
        } else if (role.rfind("attack_", 0) == 0) {
            const std::size_t idx = std::stoul(role.substr(7));
            if (idx == 0 || idx > model.attacks.size())
                throw std::runtime_error("manifest: bad attack index in " + role);
            mlp_from_tensors(model.attacks[idx - 1].net, mbw1_load(path));
        } else {
            throw std::runtime_error("manifest: unknown role " + role);
        }
    }
    if (!have_clean || !have_router)
        throw std::runtime_error("manifest: incomplete model in " + weights_dir);
    return model;
}

void save_single(const std::string& weights_dir, const ExpertNet& net) {
    fs::create_directories(weights_dir);
    mbw1_save((fs::path(weights_dir) / "single.mbw").string(), mlp_to_tensors(net.net));
    write_manifest(weights_dir, {{"single", "single.mbw"}});
}

ExpertNet load_single(const std::string& weights_dir, const Config& cfg, std::size_t image_dim) {
    const auto roles = read_manifest(weights_dir);
    if (roles.size() != 1 || roles[0].first != "single")
        throw std::runtime_error("manifest: expected a single-expert model in " + weights_dir);
    ExpertNet net = make_expert(cfg, image_dim);
    mlp_from_tensors(net.net, mbw1_load((fs::path(weights_dir) / roles[0].second).string()));
    return net;
}

MixBridgeModel train_full_mixbridge(const Config& cfg, const DataBundle& data,
                                    std::ostream* loss_csv) {
    const TrainConfig tc = cfg.train_config();
    auto ptrs = data.train_ptrs();
    DivideResult divide = train_divide(tc, ptrs);
    MixBridgeModel model = assemble_model(std::move(divide));
    train_merge(model, tc, ptrs, loss_csv);
    return model;
}

ExpertNet train_baseline_single(const Config& cfg, const DataBundle& data) {
    return train_single(cfg.train_config(), data.train_ptrs());
}

namespace {

EvalResult evaluate_impl(const MixBridgeModel* mix, const ExpertNet* single,
                         const DataBundle& data, const Config& cfg) {
    const auto sched = make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max);
    const auto grid = sample_grid(cfg.n_steps, cfg.coarse_steps);
    const FrozenEmbedder emb =
        FrozenEmbedder::create(data.image_dim(), derive_seed(cfg.seed, pipe_tag::embedder));

    EvalResult res;
    for (std::size_t t = 0; t < data.eval.size(); ++t) {
        const PairDataset& ds = data.eval[t];
        TaskMetrics m;
        m.task = ds.task;
        m.count = ds.pairs.size();
        std::vector<double> cos_scores;
        std::vector<std::vector<double>> weights;
        double mse_sum = 0.0, psnr_sum = 0.0, ssim_sum = 0.0, ent_sum = 0.0;
        for (std::size_t j = 0; j < ds.pairs.size(); ++j) {
            Rng rng(derive_seed(cfg.seed, pipe_tag::generate + t * 4096 + j));
            const Tensor& x0 = ds.pairs[j].first;
            const Tensor& x1 = ds.pairs[j].second;
            GenResult gen = mix ? generate(*mix, x1, sched, rng, cfg.deterministic, &grid)
                                : generate(*single, x1, sched, rng, cfg.deterministic, &grid);
            mse_sum += mse(gen.x0, x0);
            psnr_sum += psnr_db(gen.x0, x0);
            ssim_sum += ssim(gen.x0, x0);
            cos_scores.push_back(feature_cos(gen.x0, x0, emb));
            if (!gen.weights.empty()) {
                ent_sum += entropy_bits_of(gen.weights);
                weights.push_back(std::move(gen.weights));
            }
        }
        const double n = static_cast<double>(ds.pairs.size());
        m.mse = mse_sum / n;
        m.psnr_db = psnr_sum / n;
        m.ssim = ssim_sum / n;
        double cos_sum = 0.0;
        for (double c : cos_scores) cos_sum += c;
        m.feat_cos = cos_sum / n;
        m.asr = asr(cos_scores, cfg.asr_threshold);
        m.entropy_bits = weights.empty() ? 0.0 : ent_sum / n;
        res.per_task.push_back(m);
        res.weights_per_task.push_back(std::move(weights));
    }
    return res;
}

}  // namespace

EvalResult evaluate_model(const MixBridgeModel& model, const DataBundle& data,
                          const Config& cfg) {
    return evaluate_impl(&model, nullptr, data, cfg);
}

EvalResult evaluate_single(const ExpertNet& net, const DataBundle& data, const Config& cfg) {
    return evaluate_impl(nullptr, &net, data, cfg);
}

CheckResult oracle_bridge_exactness() {
    Rng rng(0xB71DE);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n_steps = 1 + static_cast<int>(rng.uniform_index(400));
        const double bmin = 1e-6 + rng.uniform() * 0.01;
        const double bmax = bmin + rng.uniform() * 0.05;
        const auto s = make_linear_schedule(n_steps, bmin, bmax);
        for (int n = 0; n <= n_steps; ++n) {
            if (std::abs(s.sigma2[n] + s.sigma_bar2[n] - s.sigma2[n_steps]) > 1e-12)
                return {false, "variance conservation violated at trial " + std::to_string(trial)};
        }
        for (int probe = 0; probe < 8; ++probe) {
            int a = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_steps) + 1));
            int b = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_steps) + 1));
            int c = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_steps) + 1));
            if (a > b) std::swap(a, b);
            if (b > c) std::swap(b, c);
            if (a > b) std::swap(a, b);
            const auto p = posterior_params(s, a, b, c);
            if (!(p.coef0 >= 0.0 && p.coef0 <= 1.0 && p.coef1 >= 0.0 && p.coef1 <= 1.0))
                return {false, "coefficients left the simplex"};
            if (std::abs(p.coef0 + p.coef1 - 1.0) > 1e-12)
                return {false, "coefficient sum drifted from 1"};
            if (p.var < 0.0) return {false, "negative posterior variance"};
            const auto lo = posterior_params(s, a, a, c);
            if (lo.coef0 != 1.0 || lo.var != 0.0) return {false, "endpoint delta (low) violated"};
            if (a != c) {  // degenerate zero-width intervals pin to x0 by convention
                const auto hi = posterior_params(s, a, c, c);
                if (hi.coef1 != 1.0 || hi.var != 0.0)
                    return {false, "endpoint delta (high) violated"};
            }
        }
    }
    return {true, "1000 randomized schedules: conservation 1e-12, simplex, exact endpoint deltas"};
}

CheckResult oracle_mc_marginal() {
    const auto s = make_linear_schedule(1000, 1e-4, 2e-2);
    Rng rng(0x3C0FFEE);
    Tensor x0({4}, 0.0), x1({4}, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        x0.data[i] = 0.2 * static_cast<double>(i) - 0.1;
        x1.data[i] = 1.0 - 0.15 * static_cast<double>(i);
    }
    const int draws = 10000;
    for (int n : {100, 300, 500, 700, 900}) {
        const auto p = posterior_params(s, 0, n, s.n_steps);
        std::vector<double> sum(4, 0.0), sum2(4, 0.0);
        for (int d = 0; d < draws; ++d) {
            const Tensor xt = sample_bridge_point(s, x0, x1, n, rng);
            for (std::size_t i = 0; i < 4; ++i) {
                sum[i] += xt.data[i];
                sum2[i] += xt.data[i] * xt.data[i];
            }
        }
        for (std::size_t i = 0; i < 4; ++i) {
            const double mu = p.coef0 * x0.data[i] + p.coef1 * x1.data[i];
            const double mean = sum[i] / draws;
            const double var = sum2[i] / draws - mean * mean;
            const double se_mean = std::sqrt(p.var / draws);
            const double se_var = p.var * std::sqrt(2.0 / draws);
            if (std::abs(mean - mu) > 3.0 * se_mean)
                return {false, "mean off at n=" + std::to_string(n)};
            if (std::abs(var - p.var) > 3.0 * se_var)
                return {false, "variance off at n=" + std::to_string(n)};
        }
    }
    return {true, "5 interior steps, 10k draws: mean and variance within 3 SE of the closed form"};
}

CheckResult oracle_thm1() {
    Rng rng(0x7411);
    std::vector<Thm1Point> points;
    points.reserve(1000);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t tasks = 1 + rng.uniform_index(5);
        Thm1Point pt;
        for (std::size_t t = 0; t < tasks; ++t) {
            pt.joint_weight.push_back(rng.uniform() + 1e-6);
            pt.score.push_back(4.0 * (2.0 * rng.uniform() - 1.0));
        }
        points.push_back(std::move(pt));
    }
    const double dev = thm1_oracle(points);
    std::ostringstream msg;
    msg << "max |pointwise minimizer - weighted average| = " << dev << " over 1000 points";
    if (dev >= 1e-10) return {false, msg.str()};
    return {true, msg.str()};
}

CheckResult oracle_gradient_fidelity() {
    Rng rng(0x6FAD);
    int checked_expert = 0, checked_router = 0, checked_mix = 0;

    // expert
    {
        auto net = ExpertNet::create(6, {10, 8}, 4, rng);
        for (auto& v : net.net.layers.back().w) v = 0.2 * (2.0 * rng.uniform() - 1.0);
        Tensor x({6});
        for (auto& v : x.data) v = 2.0 * rng.uniform() - 1.0;
        Tensor up({6});
        for (auto& v : up.data) v = 2.0 * rng.uniform() - 1.0;
        ExpertNet::Cache cache;
        net.forward_cached(x, 3, 7, cache);
        Mlp grads = net.net.zeros_like();
        net.backward(cache, up, grads);
        auto params = net.param_views();
        auto gv = grads.param_views();
        const double h = 1e-5;
        for (std::size_t t = 0; t < params.size(); ++t) {
            const std::size_t stride = std::max<std::size_t>(1, params[t].n / 40);
            for (std::size_t j = 0; j < params[t].n; j += stride) {
                const double keep = params[t].data[j];
                auto probe = [&] {
                    const Tensor out = net.forward(x, 3, 7);
                    return kernels::ops().dot(out.data.data(), up.data.data(), out.size());
                };
                params[t].data[j] = keep + h;
                const double fp = probe();
                params[t].data[j] = keep - h;
                const double fm = probe();
                params[t].data[j] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                const double an = gv[t].data[j];
                if (std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) >= 1e-4)
                    return CheckResult{false, "expert gradient mismatch"};
                ++checked_expert;
            }
        }
    }

    // router + mixture, through the full mixed objective
    {
        Rng mrng(0x1234);
        auto model = MixBridgeModel::create(5, {8}, 2, {7}, 5, 2, mrng);
        for (std::size_t e = 0; e < model.n_experts(); ++e)
            for (auto& v : model.expert(e).net.layers.back().w)
                v = 0.2 * (2.0 * mrng.uniform() - 1.0);
        Tensor x_t({5}), x1({5}), up({5});
        for (auto& v : x_t.data) v = 2.0 * mrng.uniform() - 1.0;
        for (auto& v : x1.data) v = 2.0 * mrng.uniform() - 1.0;
        for (auto& v : up.data) v = 2.0 * mrng.uniform() - 1.0;

        MixCache cache;
        mix_forward_cached(model, x_t, 2, 5, x1, cache);
        MixGrads grads = zero_grads(model);
        mix_backward(model, cache, up, grads);

        auto params = model_param_views(model);
        auto gv = model_grad_views(grads);
        auto probe = [&] {
            const MixForward f = mix_forward(model, x_t, 2, 5, x1);
            return kernels::ops().dot(f.eps.data.data(), up.data.data(), f.eps.size());
        };
        const double h = 1e-5;
        for (std::size_t t = 0; t < params.size(); ++t) {
            const std::size_t stride = std::max<std::size_t>(1, params[t].n / 20);
            for (std::size_t j = 0; j < params[t].n; j += stride) {
                const double keep = params[t].data[j];
                params[t].data[j] = keep + h;
                const double fp = probe();
                params[t].data[j] = keep - h;
                const double fm = probe();
                params[t].data[j] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                const double an = gv[t].data[j];
                if (std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) >= 1e-4)
                    return CheckResult{false, "mixture gradient mismatch"};
                ++checked_mix;
            }
        }

        // router alone through the weight vector
        Router::Cache rc;
        const auto w0 = model.router.forward_cached(x1, rc);
        std::vector<double> upw(w0.size());
        for (auto& v : upw) v = 2.0 * mrng.uniform() - 1.0;
        auto rgrads = model.router.zero_grads();
        model.router.backward(rc, upw, rgrads);
        auto rparams = model.router.param_views();
        auto rgv = Router::grad_views(rgrads);
        auto rprobe = [&] {
            const auto w = model.router.forward(x1);
            double s = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * upw[i];
            return s;
        };
        for (std::size_t t = 0; t < rparams.size(); ++t) {
            const std::size_t stride = std::max<std::size_t>(1, rparams[t].n / 30);
            for (std::size_t j = 0; j < rparams[t].n; j += stride) {
                const double keep = rparams[t].data[j];
                rparams[t].data[j] = keep + h;
                const double fp = rprobe();
                rparams[t].data[j] = keep - h;
                const double fm = rprobe();
                rparams[t].data[j] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                const double an = rgv[t].data[j];
                if (std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}) >= 1e-4)
                    return CheckResult{false, "router gradient mismatch"};
                ++checked_router;
            }
        }
    }

    // WRS, tighter tolerance
    {
        Rng wrng(0x9F);
        std::vector<std::vector<double>> w_batch;
        for (int i = 0; i < 8; ++i) {
            std::vector<double> w(4);
            double sum = 0.0;
            for (auto& v : w) {
                v = wrng.uniform() + 0.05;
                sum += v;
            }
            for (auto& v : w) v /= sum;
            w_batch.push_back(std::move(w));
        }
        std::vector<std::vector<double>> grads;
        wrs_loss(w_batch, &grads);
        const double h = 1e-6;
        int checked = 0;
        for (std::size_t i = 0; i < w_batch.size(); ++i) {
            for (std::size_t j = 0; j < w_batch[i].size(); ++j) {
                const double keep = w_batch[i][j];
                w_batch[i][j] = keep + h;
                const double fp = wrs_loss(w_batch);
                w_batch[i][j] = keep - h;
                const double fm = wrs_loss(w_batch);
                w_batch[i][j] = keep;
                const double fd = (fp - fm) / (2.0 * h);
                const double an = grads[i][j];
                if (std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-9}) >= 1e-6)
                    return CheckResult{false, "wrs gradient mismatch"};
                ++checked;
            }
        }
        if (checked < 32) return {false, "wrs check too small"};
    }

    std::ostringstream msg;
    msg << "finite differences agree: expert " << checked_expert << ", mixture " << checked_mix
        << ", router " << checked_router << " coordinates (rel err < 1e-4; WRS < 1e-6)";
    if (checked_expert < 100 || checked_mix < 100 || checked_router < 100)
        return {false, "fewer than 100 coordinates sampled"};
    return {true, msg.str()};
}

void write_resolved_config(const Config& cfg, const std::string& run_dir) {
    fs::create_directories(run_dir);
    std::ofstream out(fs::path(run_dir) / "config_resolved.ini");
    if (!out) throw std::runtime_error("cannot write resolved config in " + run_dir);
    out << resolved_text(cfg);
}

}  // namespace mixbridge
