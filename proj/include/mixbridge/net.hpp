#pragma once

#include <cstddef>
#include <vector>

#include "mixbridge/rng.hpp"
#include "mixbridge/tensor.hpp"

namespace mixbridge {

struct ParamView {
    double* data;
    std::size_t n;
};
struct ConstParamView {
    const double* data;
    std::size_t n;
};

inline std::vector<ConstParamView> as_const_views(const std::vector<ParamView>& views) {
    std::vector<ConstParamView> out;
    out.reserve(views.size());
    for (const auto& v : views) out.push_back({v.data, v.n});
    return out;
}

// Fully-connected layer, weights row-major [out_dim x in_dim].
struct Dense {
    std::size_t in_dim = 0, out_dim = 0;
    std::vector<double> w, b;

    Dense() = default;
    Dense(std::size_t in, std::size_t out)
        : in_dim(in), out_dim(out), w(in * out, 0.0), b(out, 0.0) {}
};

// Feed-forward net with tanh hidden activations and hand-derived backprop.
// The output layer is linear unless tanh_output is set.
struct Mlp {
    std::vector<Dense> layers;
    bool tanh_output = false;

    // dims = {in, h1, ..., out}. Hidden and output weights are fan-in-scaled
    // uniform U(-1/sqrt(in), 1/sqrt(in)); zero_init_last zeroes the output
    // layer instead.
    static Mlp create(const std::vector<std::size_t>& dims, Rng& rng,
                      bool zero_init_last = false, bool tanh_output = false);

    Mlp zeros_like() const;  // same shapes, zero-filled; used as a gradient holder
    void zero();

    std::size_t in_dim() const { return layers.front().in_dim; }
    std::size_t out_dim() const { return layers.back().out_dim; }

    std::vector<double> forward(const std::vector<double>& input) const;

    // act[0] = input, act[l+1] = post-activation output of layer l
    struct Cache {
        std::vector<std::vector<double>> act;
        const std::vector<double>& output() const { return act.back(); }
    };
    void forward_cached(const std::vector<double>& input, Cache& cache) const;

    // Accumulates parameter gradients of <upstream, output> into `grads`
    // (an Mlp of identical shapes); when dx != nullptr also accumulates the
    // input gradient there (dx must hold in_dim() zeros or a running sum).
    void backward(const Cache& cache, const std::vector<double>& upstream, Mlp& grads,
                  double* dx = nullptr) const;

    std::vector<ParamView> param_views();
    std::vector<ConstParamView> param_views() const;
};

// Sinusoidal step features: for j < k/2, emb[2j] = sin(pi*t*2^j),
// emb[2j+1] = cos(pi*t*2^j), with t = n/n_steps. k must be even.
Tensor time_embed(int n, int n_steps, int k);

// Score network: input = flattened state concatenated with the time features,
// output the same shape as the state.
struct ExpertNet {
    std::size_t image_dim = 0;
    int time_dim = 0;
    Mlp net;

    static ExpertNet create(std::size_t image_dim, const std::vector<std::size_t>& hidden,
                            int time_dim, Rng& rng);

    Tensor forward(const Tensor& x_t, int n, int n_steps) const;

    struct Cache {
        Mlp::Cache mlp;
    };
    Tensor forward_cached(const Tensor& x_t, int n, int n_steps, Cache& cache) const;

    // Parameter gradients of <upstream, forward(x_t, n)>; optional gradient
    // w.r.t. the state input (image part only) accumulated into dx.
    void backward(const Cache& cache, const Tensor& upstream, Mlp& grads,
                  double* dx = nullptr) const;

    std::vector<ParamView> param_views() { return net.param_views(); }
    std::vector<ConstParamView> param_views() const { return net.param_views(); }
};

// Gating network: simplex weights over M+1 experts from the input image.
// weights = softmax(W^T F(x1) + b) with F a small tanh feature net.
struct Router {
    Mlp feature;  // image_dim -> ... -> d, tanh output
    Dense head;   // logits: (M+1) x d

    static Router create(std::size_t image_dim, const std::vector<std::size_t>& feature_hidden,
                         std::size_t feature_dim, std::size_t n_experts_total, Rng& rng);

    std::size_t n_weights() const { return head.out_dim; }

    std::vector<double> forward(const Tensor& x1) const;

    struct Cache {
        Mlp::Cache feat;
        std::vector<double> features, logits, weights;
    };
    std::vector<double> forward_cached(const Tensor& x1, Cache& cache) const;

    struct Grads {
        Mlp feature;
        Dense head;
        void zero();
    };
    Grads zero_grads() const;

    // Parameter gradients of <upstream, weights>, chained through the softmax;
    // optional input-image gradient accumulated into dx.
    void backward(const Cache& cache, const std::vector<double>& upstream, Grads& grads,
                  double* dx = nullptr) const;

    std::vector<ParamView> param_views();
    std::vector<ConstParamView> param_views() const;
    static std::vector<ParamView> grad_views(Grads& g);
};

}  // namespace mixbridge
