#include "mixbridge/train.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mixbridge/kernels.hpp"

namespace mixbridge {

void TrainConfig::validate() const {
    if (n_steps < 1) throw std::invalid_argument("config: n_steps must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max >= beta_min))
        throw std::invalid_argument("config: need 0 < beta_min <= beta_max");
    if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
    if (iters_single < 0 || iters_divide < 0 || iters_router < 0 || iters_merge < 0)
        throw std::invalid_argument("config: iteration counts must be >= 0");
    if (lambda_wrs < 0.0) throw std::invalid_argument("config: lambda_wrs must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (lr_merge < 0.0) throw std::invalid_argument("config: lr_merge must be >= 0");
    if (time_dim <= 0 || time_dim % 2 != 0)
        throw std::invalid_argument("config: time_dim must be a positive even number");
    if (feature_dim == 0) throw std::invalid_argument("config: feature_dim must be positive");
}

std::string loss_csv_header(std::size_t n_tasks) {
    std::ostringstream out;
    out << "iteration";
    out << ",loss_clean";
    for (std::size_t i = 1; i < n_tasks; ++i) out << ",loss_attack_" << i;
    out << ",wrs,total,entropy_bits";
    return out.str();
}

namespace {
void put_num(std::ostream& out, double v) {
    // locale-independent: stream with C formatting of ostringstream default
    out << v;
}
}  // namespace

std::string loss_csv_row(const LossReport& r) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(17);
    out << r.iteration;
    for (double v : r.per_task) {
        out << ',';
        put_num(out, v);
    }
    out << ',';
    put_num(out, r.wrs);
    out << ',';
    put_num(out, r.total);
    out << ',';
    put_num(out, r.entropy_bits);
    return out.str();
}

double entropy_bits_of(const std::vector<double>& w) {
    double h = 0.0;
    for (double p : w) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    return h;
}

double bridge_loss_and_grads(const ExpertNet& net, const std::vector<BatchItem>& batch,
                             const NoiseSchedule& sched, Rng& rng, Mlp& grads,
                             std::vector<double>* per_task_mse, std::size_t n_tasks) {
    if (batch.empty()) throw std::invalid_argument("bridge_loss: empty batch");
    const auto& k = kernels::ops();
    const double sigma_floor = sched.sigma(1);
    const std::size_t dim = batch.front().x0->size();
    const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(dim));

    std::vector<double> task_sum(n_tasks, 0.0);
    std::vector<std::size_t> task_count(n_tasks, 0);

    double loss_sum = 0.0;
    ExpertNet::Cache cache;
    Tensor target, resid;
    for (const BatchItem& item : batch) {
        const int n = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(sched.n_steps)));
        const Tensor x_t = sample_bridge_point(sched, *item.x0, *item.x1, n, rng);
        const double sigma = std::max(sched.sigma(n), sigma_floor);

        target.shape = x_t.shape;
        target.data.resize(dim);
        for (std::size_t i = 0; i < dim; ++i)
            target.data[i] = (x_t.data[i] - item.x0->data[i]) / sigma;

        const Tensor out = net.forward_cached(x_t, n, sched.n_steps, cache);
        resid.shape = out.shape;
        resid.data.resize(dim);
        k.sub(out.data.data(), target.data.data(), resid.data.data(), dim);

        const double item_sq = k.dot(resid.data.data(), resid.data.data(), dim);
        loss_sum += item_sq;
        if (static_cast<std::size_t>(item.task) < n_tasks) {
            task_sum[static_cast<std::size_t>(item.task)] += item_sq;
            task_count[static_cast<std::size_t>(item.task)] += 1;
        }

        k.scale(resid.data.data(), dim, 2.0 * norm);
        net.backward(cache, resid, grads);
    }

    if (per_task_mse) {
        per_task_mse->assign(n_tasks, 0.0);
        for (std::size_t t = 0; t < n_tasks; ++t)
            if (task_count[t])
                (*per_task_mse)[t] =
                    task_sum[t] / (static_cast<double>(task_count[t]) * static_cast<double>(dim));
    }
    return loss_sum * norm;
}

double naive_backdoor_loss_and_grads(const ExpertNet& net, const std::vector<BatchItem>& batch,
                                     const NoiseSchedule& sched, Rng& rng, Mlp& grads) {
    return bridge_loss_and_grads(net, batch, sched, rng, grads);
}

double wrs_loss(const std::vector<std::vector<double>>& w_batch,
                std::vector<std::vector<double>>* grads) {
    if (w_batch.empty()) return 0.0;
    const double batch = static_cast<double>(w_batch.size());
    const double u = 1.0 / static_cast<double>(w_batch.front().size());
    if (grads) grads->assign(w_batch.size(), {});
    double sum = 0.0;
    for (std::size_t i = 0; i < w_batch.size(); ++i) {
        const auto& w = w_batch[i];
        double item = 0.0;
        if (grads) (*grads)[i].resize(w.size());
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double d = w[j] - u;
            item += d * d;
            if (grads) (*grads)[i][j] = 2.0 * d / batch;
        }
        sum += item;
    }
    return sum / batch;
}

namespace {

// Shared single-expert loop; divide-stage experts use a degenerate one-task
// mixture so the single-model baseline reduces to it exactly.
void train_expert_loop(ExpertNet& net, const std::vector<const PairDataset*>& datasets,
                       const MixtureSpec& spec, const NoiseSchedule& sched, int iters,
                       const TrainConfig& cfg, Rng& rng) {
    auto params = net.param_views();
    AdamW opt(cfg.optim(), params);
    Mlp grads = net.net.zeros_like();
    for (int it = 0; it < iters; ++it) {
        const auto batch = sample_mixture_batch(datasets, spec, cfg.batch, rng);
        grads.zero();
        bridge_loss_and_grads(net, batch, sched, rng, grads);
        auto gv = grads.param_views();
        opt.step(params, as_const_views(gv));
    }
}

std::size_t image_dim_of(const std::vector<const PairDataset*>& datasets) {
    for (const auto* d : datasets)
        if (d && !d->pairs.empty()) return d->pairs.front().first.size();
    throw std::invalid_argument("train: no usable dataset");
}

}  // namespace

ExpertNet train_single(const TrainConfig& cfg, const std::vector<const PairDataset*>& datasets) {
    cfg.validate();
    if (datasets.size() != cfg.mixture.n_tasks())
        throw std::invalid_argument("train_single: dataset count != mixture task count");
    const std::size_t dim = image_dim_of(datasets);

    Rng init(derive_seed(cfg.seed, seed_tag::expert_init + 0));
    ExpertNet net = ExpertNet::create(dim, cfg.hidden, cfg.time_dim, init);
    Rng stream(derive_seed(cfg.seed, seed_tag::expert_train + 0));
    train_expert_loop(net, datasets, cfg.mixture, make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max),
                      cfg.iters_single, cfg, stream);
    return net;
}

DivideResult train_divide(const TrainConfig& cfg,
                          const std::vector<const PairDataset*>& datasets) {
    cfg.validate();
    const std::size_t n_tasks = datasets.size();
    if (n_tasks == 0) throw std::invalid_argument("train_divide: no datasets");
    const std::size_t dim = image_dim_of(datasets);
    const auto sched = make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max);

    DivideResult out;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        if (!datasets[t] || datasets[t]->pairs.empty())
            throw std::invalid_argument("train_divide: empty dataset for task " +
                                        std::to_string(t));
        Rng init(derive_seed(cfg.seed, seed_tag::expert_init + t));
        ExpertNet net = ExpertNet::create(dim, cfg.hidden, cfg.time_dim, init);
        Rng stream(derive_seed(cfg.seed, seed_tag::expert_train + t));
        // task-specific warm-up: this expert sees only its own pairs
        MixtureSpec own(t == 0 ? 1.0 : 0.0, [&] {
            std::vector<double> a(n_tasks - 1, 0.0);
            if (t > 0) a[t - 1] = 1.0;
            return a;
        }());
        train_expert_loop(net, datasets, own, sched, cfg.iters_divide, cfg, stream);
        out.experts.push_back(std::move(net));
    }

    // Router warm-up as a task classifier on (possibly triggered) inputs.
    Rng rinit(derive_seed(cfg.seed, seed_tag::router_init));
    out.router = Router::create(dim, cfg.feature_hidden, cfg.feature_dim, n_tasks, rinit);
    Rng rstream(derive_seed(cfg.seed, seed_tag::router_train));
    auto params = out.router.param_views();
    AdamW opt(cfg.optim(), params);
    auto grads = out.router.zero_grads();
    const MixtureSpec equal = MixtureSpec::equal(static_cast<int>(n_tasks) - 1);
    Router::Cache cache;
    for (int it = 0; it < cfg.iters_router; ++it) {
        const auto batch = sample_mixture_batch(datasets, equal, cfg.batch, rstream);
        grads.zero();
        for (const BatchItem& item : batch) {
            const auto w = out.router.forward_cached(*item.x1, cache);
            // cross-entropy against the task label, mean over the batch
            std::vector<double> up(w.size(), 0.0);
            up[static_cast<std::size_t>(item.task)] =
                -1.0 / (w[static_cast<std::size_t>(item.task)] * static_cast<double>(batch.size()));
            out.router.backward(cache, up, grads);
        }
        auto gv = Router::grad_views(grads);
        opt.step(params, as_const_views(gv));
    }
    return out;
}

MixBridgeModel assemble_model(DivideResult divide) {
    if (divide.experts.empty()) throw std::invalid_argument("assemble_model: no experts");
    MixBridgeModel m;
    m.clean = std::move(divide.experts[0]);
    for (std::size_t i = 1; i < divide.experts.size(); ++i)
        m.attacks.push_back(std::move(divide.experts[i]));
    m.router = std::move(divide.router);
    return m;
}

std::vector<LossReport> train_merge(MixBridgeModel& model, const TrainConfig& cfg,
                                    const std::vector<const PairDataset*>& datasets,
                                    std::ostream* csv) {
    cfg.validate();
    const std::size_t n_tasks = model.n_experts();
    if (datasets.size() != n_tasks)
        throw std::invalid_argument("train_merge: dataset count != expert count");
    if (cfg.mixture.n_tasks() != n_tasks)
        throw std::invalid_argument("train_merge: mixture task count != expert count");
    const auto sched = make_linear_schedule(cfg.n_steps, cfg.beta_min, cfg.beta_max);
    const auto& k = kernels::ops();
    const double sigma_floor = sched.sigma(1);

    auto params = model_param_views(model);
    AdamW opt(cfg.optim_merge(), params);
    MixGrads grads = zero_grads(model);

    Rng rng(derive_seed(cfg.seed, seed_tag::merge_train));
    if (csv) *csv << loss_csv_header(n_tasks) << "\n";

    std::vector<LossReport> history;
    history.reserve(static_cast<std::size_t>(cfg.iters_merge));
    const double u = 1.0 / static_cast<double>(n_tasks);

    MixCache cache;
    Tensor target, resid;
    for (int it = 0; it < cfg.iters_merge; ++it) {
        const auto batch = sample_mixture_batch(datasets, cfg.mixture, cfg.batch, rng);
        grads.zero();

        const std::size_t dim = batch.front().x0->size();
        const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(dim));

        LossReport rep;
        rep.iteration = it;
        rep.lambda = cfg.lambda_wrs;
        rep.per_task.assign(n_tasks, 0.0);
        std::vector<std::size_t> task_count(n_tasks, 0);

        double bridge_sum = 0.0, wrs_sum = 0.0, entropy_sum = 0.0;
        for (const BatchItem& item : batch) {
            const int n =
                1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(sched.n_steps)));
            const Tensor x_t = sample_bridge_point(sched, *item.x0, *item.x1, n, rng);
            const double sigma = std::max(sched.sigma(n), sigma_floor);

            target.shape = x_t.shape;
            target.data.resize(dim);
            for (std::size_t i = 0; i < dim; ++i)
                target.data[i] = (x_t.data[i] - item.x0->data[i]) / sigma;

            const MixForward fwd =
                mix_forward_cached(model, x_t, n, sched.n_steps, *item.x1, cache);
            resid.shape = fwd.eps.shape;
            resid.data.resize(dim);
            k.sub(fwd.eps.data.data(), target.data.data(), resid.data.data(), dim);

            const double item_sq = k.dot(resid.data.data(), resid.data.data(), dim);
            bridge_sum += item_sq;
            rep.per_task[static_cast<std::size_t>(item.task)] += item_sq;
            task_count[static_cast<std::size_t>(item.task)] += 1;

            double item_wrs = 0.0;
            std::vector<double> wgrad(n_tasks);
            for (std::size_t j = 0; j < n_tasks; ++j) {
                const double d = fwd.weights[j] - u;
                item_wrs += d * d;
                wgrad[j] = cfg.lambda_wrs * 2.0 * d / static_cast<double>(batch.size());
            }
            wrs_sum += item_wrs;
            entropy_sum += entropy_bits_of(fwd.weights);

            k.scale(resid.data.data(), dim, 2.0 * norm);
            mix_backward(model, cache, resid, grads, &wgrad);
        }

        auto gv = model_grad_views(grads);
        opt.step(params, as_const_views(gv));

        rep.bridge = bridge_sum * norm;
        rep.wrs = wrs_sum / static_cast<double>(batch.size());
        rep.total = rep.bridge + cfg.lambda_wrs * rep.wrs;
        rep.entropy_bits = entropy_sum / static_cast<double>(batch.size());
        for (std::size_t t = 0; t < n_tasks; ++t)
            if (task_count[t])
                rep.per_task[t] /= static_cast<double>(task_count[t]) * static_cast<double>(dim);
        if (csv) *csv << loss_csv_row(rep) << "\n";
        history.push_back(std::move(rep));
    }
    return history;
}

}  // namespace mixbridge
