#include "mixbridge/net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mixbridge/kernels.hpp"

namespace mixbridge {

namespace {

void init_dense(Dense& layer, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
    for (auto& v : layer.w) v = (2.0 * rng.uniform() - 1.0) * bound;
    for (auto& v : layer.b) v = (2.0 * rng.uniform() - 1.0) * bound;
}

void apply_tanh(std::vector<double>& v) {
    for (auto& x : v) x = std::tanh(x);
}

// upstream is overwritten by d<loss>/d(pre-activation) given post-activation a
void tanh_backprop(std::vector<double>& upstream, const std::vector<double>& a) {
    for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] *= 1.0 - a[i] * a[i];
}

}  // namespace

Mlp Mlp::create(const std::vector<std::size_t>& dims, Rng& rng, bool zero_init_last,
                bool tanh_output) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp::create: need at least in/out dims");
    Mlp m;
    m.tanh_output = tanh_output;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Dense d(dims[l], dims[l + 1]);
        const bool last = (l + 2 == dims.size());
        if (!(last && zero_init_last)) init_dense(d, rng);
        m.layers.push_back(std::move(d));
    }
    return m;
}

Mlp Mlp::zeros_like() const {
    Mlp g;
    g.tanh_output = tanh_output;
    for (const auto& layer : layers) g.layers.emplace_back(layer.in_dim, layer.out_dim);
    return g;
}

void Mlp::zero() {
    for (auto& layer : layers) {
        std::fill(layer.w.begin(), layer.w.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
    }
}

std::vector<double> Mlp::forward(const std::vector<double>& input) const {
    Cache c;
    forward_cached(input, c);
    return c.act.back();
}

void Mlp::forward_cached(const std::vector<double>& input, Cache& cache) const {
    if (input.size() != in_dim()) throw std::invalid_argument("Mlp: input width mismatch");
    const auto& k = kernels::ops();
    cache.act.resize(layers.size() + 1);  // buffers reused across calls
    cache.act[0] = input;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Dense& d = layers[l];
        auto& out = cache.act[l + 1];
        out.resize(d.out_dim);
        k.matvec(d.w.data(), cache.act[l].data(), d.b.data(), out.data(), d.out_dim, d.in_dim);
        if (l + 1 < layers.size() || tanh_output) apply_tanh(out);
    }
}

void Mlp::backward(const Cache& cache, const std::vector<double>& upstream, Mlp& grads,
                   double* dx) const {
    if (upstream.size() != out_dim()) throw std::invalid_argument("Mlp: upstream width mismatch");
    if (grads.layers.size() != layers.size())
        throw std::invalid_argument("Mlp: gradient holder shape mismatch");
    const auto& k = kernels::ops();

    std::vector<double> delta = upstream;
    if (tanh_output) tanh_backprop(delta, cache.act.back());

    for (std::size_t li = layers.size(); li-- > 0;) {
        const Dense& d = layers[li];
        Dense& g = grads.layers[li];
        const std::vector<double>& in = cache.act[li];

        k.ger_acc(g.w.data(), delta.data(), in.data(), d.out_dim, d.in_dim);
        k.axpy(1.0, delta.data(), g.b.data(), d.out_dim);

        if (li == 0) {
            if (dx) k.matvec_t_acc(d.w.data(), delta.data(), dx, d.out_dim, d.in_dim);
            break;
        }
        std::vector<double> prev(d.in_dim, 0.0);
        k.matvec_t_acc(d.w.data(), delta.data(), prev.data(), d.out_dim, d.in_dim);
        tanh_backprop(prev, in);
        delta = std::move(prev);
    }
}

std::vector<ParamView> Mlp::param_views() {
    std::vector<ParamView> v;
    for (auto& layer : layers) {
        v.push_back({layer.w.data(), layer.w.size()});
        v.push_back({layer.b.data(), layer.b.size()});
    }
    return v;
}

std::vector<ConstParamView> Mlp::param_views() const {
    std::vector<ConstParamView> v;
    for (const auto& layer : layers) {
        v.push_back({layer.w.data(), layer.w.size()});
        v.push_back({layer.b.data(), layer.b.size()});
    }
    return v;
}

Tensor time_embed(int n, int n_steps, int k) {
    if (k % 2 != 0) throw std::invalid_argument("time_embed: k must be even");
    if (n < 0 || n > n_steps) throw std::invalid_argument("time_embed: step index out of range");
    const double t = static_cast<double>(n) / static_cast<double>(n_steps);
    Tensor emb{static_cast<std::size_t>(k)};
    double freq = std::numbers::pi * t;
    for (int j = 0; j < k / 2; ++j) {
        emb.data[2 * j] = std::sin(freq);
        emb.data[2 * j + 1] = std::cos(freq);
        freq *= 2.0;
    }
    return emb;
}

ExpertNet ExpertNet::create(std::size_t image_dim, const std::vector<std::size_t>& hidden,
                            int time_dim, Rng& rng) {
    ExpertNet e;
    e.image_dim = image_dim;
    e.time_dim = time_dim;
    std::vector<std::size_t> dims;
    dims.push_back(image_dim + static_cast<std::size_t>(time_dim));
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(image_dim);
    // Zero-initialized output layer: the untrained bridge predicts eps = 0.
    e.net = Mlp::create(dims, rng, /*zero_init_last=*/true);
    return e;
}

Tensor ExpertNet::forward(const Tensor& x_t, int n, int n_steps) const {
    Cache c;
    return forward_cached(x_t, n, n_steps, c);
}

Tensor ExpertNet::forward_cached(const Tensor& x_t, int n, int n_steps, Cache& cache) const {
    if (x_t.size() != image_dim) throw std::invalid_argument("ExpertNet: state width mismatch");
    const Tensor emb = time_embed(n, n_steps, time_dim);
    std::vector<double> input;
    input.reserve(image_dim + emb.size());
    input.insert(input.end(), x_t.data.begin(), x_t.data.end());
    input.insert(input.end(), emb.data.begin(), emb.data.end());
    net.forward_cached(input, cache.mlp);

    Tensor out;
    out.shape = x_t.shape;
    out.data = cache.mlp.output();
    return out;
}

void ExpertNet::backward(const Cache& cache, const Tensor& upstream, Mlp& grads,
                         double* dx) const {
    if (upstream.size() != image_dim) throw std::invalid_argument("ExpertNet: upstream mismatch");
    if (!dx) {
        net.backward(cache.mlp, upstream.data, grads, nullptr);
        return;
    }
    std::vector<double> dinput(net.in_dim(), 0.0);
    net.backward(cache.mlp, upstream.data, grads, dinput.data());
    kernels::ops().axpy(1.0, dinput.data(), dx, image_dim);  // drop the time-feature part
}

Router Router::create(std::size_t image_dim, const std::vector<std::size_t>& feature_hidden,
                      std::size_t feature_dim, std::size_t n_experts_total, Rng& rng) {
    Router r;
    std::vector<std::size_t> dims;
    dims.push_back(image_dim);
    dims.insert(dims.end(), feature_hidden.begin(), feature_hidden.end());
    dims.push_back(feature_dim);
    r.feature = Mlp::create(dims, rng, false, /*tanh_output=*/true);
    r.head = Dense(feature_dim, n_experts_total);
    init_dense(r.head, rng);
    return r;
}

std::vector<double> Router::forward(const Tensor& x1) const {
    Cache c;
    return forward_cached(x1, c);
}

std::vector<double> Router::forward_cached(const Tensor& x1, Cache& cache) const {
    const auto& k = kernels::ops();
    feature.forward_cached(x1.data, cache.feat);
    cache.features = cache.feat.output();

    cache.logits.assign(head.out_dim, 0.0);
    k.matvec(head.w.data(), cache.features.data(), head.b.data(), cache.logits.data(),
             head.out_dim, head.in_dim);

    double max_logit = cache.logits[0];
    for (double v : cache.logits) {
        if (!std::isfinite(v)) throw std::runtime_error("Router: non-finite logits");
        if (v > max_logit) max_logit = v;
    }
    cache.weights.assign(head.out_dim, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < head.out_dim; ++i) {
        cache.weights[i] = std::exp(cache.logits[i] - max_logit);
        sum += cache.weights[i];
    }
    for (auto& w : cache.weights) w /= sum;
    return cache.weights;
}

Router::Grads Router::zero_grads() const {
    Grads g;
    g.feature = feature.zeros_like();
    g.head = Dense(head.in_dim, head.out_dim);
    return g;
}

void Router::Grads::zero() {
    feature.zero();
    std::fill(head.w.begin(), head.w.end(), 0.0);
    std::fill(head.b.begin(), head.b.end(), 0.0);
}

void Router::backward(const Cache& cache, const std::vector<double>& upstream, Grads& grads,
                      double* dx) const {
    if (upstream.size() != head.out_dim) throw std::invalid_argument("Router: upstream mismatch");
    const auto& k = kernels::ops();
    const auto& w = cache.weights;

    // softmax jacobian: dlogit_j = w_j * (up_j - <up, w>)
    const double inner = k.dot(upstream.data(), w.data(), w.size());
    std::vector<double> dlogits(head.out_dim);
    for (std::size_t j = 0; j < head.out_dim; ++j) dlogits[j] = w[j] * (upstream[j] - inner);

    k.ger_acc(grads.head.w.data(), dlogits.data(), cache.features.data(), head.out_dim,
              head.in_dim);
    k.axpy(1.0, dlogits.data(), grads.head.b.data(), head.out_dim);

    std::vector<double> dfeat(head.in_dim, 0.0);
    k.matvec_t_acc(head.w.data(), dlogits.data(), dfeat.data(), head.out_dim, head.in_dim);
    feature.backward(cache.feat, dfeat, grads.feature, dx);
}

std::vector<ParamView> Router::param_views() {
    auto v = feature.param_views();
    v.push_back({head.w.data(), head.w.size()});
    v.push_back({head.b.data(), head.b.size()});
    return v;
}

std::vector<ConstParamView> Router::param_views() const {
    auto v = feature.param_views();
    v.push_back({head.w.data(), head.w.size()});
    v.push_back({head.b.data(), head.b.size()});
    return v;
}

std::vector<ParamView> Router::grad_views(Grads& g) {
    auto v = g.feature.param_views();
    v.push_back({g.head.w.data(), g.head.w.size()});
    v.push_back({g.head.b.data(), g.head.b.size()});
    return v;
}

}  // namespace mixbridge
