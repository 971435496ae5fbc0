#include "mixbridge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mixbridge/kernels.hpp"
#include "mixbridge/train.hpp"

namespace mixbridge {

double mse(const Tensor& a, const Tensor& b) { return tensor_mse(a, b); }

double psnr_db(const Tensor& a, const Tensor& b, double peak) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
    a.require_same_shape(b, "ssim");
    if (a.shape.size() != 2) throw std::invalid_argument("ssim: expects 2-d images");
    const int h = static_cast<int>(a.shape[0]);
    const int w = static_cast<int>(a.shape[1]);
    const int win = std::min({8, h, w});
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const double n = static_cast<double>(win) * win;

    double sum = 0.0;
    int windows = 0;
    for (int r0 = 0; r0 + win <= h; ++r0) {
        for (int c0 = 0; c0 + win <= w; ++c0) {
            double ma = 0.0, mb = 0.0;
            for (int r = r0; r < r0 + win; ++r)
                for (int c = c0; c < c0 + win; ++c) {
                    ma += a.data[static_cast<std::size_t>(r) * w + c];
                    mb += b.data[static_cast<std::size_t>(r) * w + c];
                }
            ma /= n;
            mb /= n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int r = r0; r < r0 + win; ++r)
                for (int c = c0; c < c0 + win; ++c) {
                    const double da = a.data[static_cast<std::size_t>(r) * w + c] - ma;
                    const double db = b.data[static_cast<std::size_t>(r) * w + c] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return sum / windows;
}

FrozenEmbedder FrozenEmbedder::create(std::size_t in_dim, std::uint64_t seed,
                                      std::size_t out_dim) {
    FrozenEmbedder e;
    e.in_dim = in_dim;
    e.out_dim = out_dim;
    e.proj.resize(in_dim * out_dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : e.proj) v = rng.normal() * scale;
    return e;
}

std::vector<double> FrozenEmbedder::embed(const Tensor& x) const {
    if (x.size() != in_dim) throw std::invalid_argument("FrozenEmbedder: input width mismatch");
    std::vector<double> out(out_dim);
    kernels::ops().matvec(proj.data(), x.data.data(), nullptr, out.data(), out_dim, in_dim);
    for (auto& v : out) v = std::tanh(v);
    return out;
}

double feature_cos(const Tensor& a, const Tensor& b, const FrozenEmbedder& emb) {
    a.require_same_shape(b, "feature_cos");
    const auto ea = emb.embed(a);
    const auto eb = emb.embed(b);
    const auto& k = kernels::ops();
    const double na = std::sqrt(k.dot(ea.data(), ea.data(), ea.size()));
    const double nb = std::sqrt(k.dot(eb.data(), eb.data(), eb.size()));
    if (na == 0.0 || nb == 0.0) {
        std::fprintf(stderr, "feature_cos: zero-norm embedding, returning 0\n");
        return 0.0;
    }
    return k.dot(ea.data(), eb.data(), ea.size()) / (na * nb);
}

double asr(const std::vector<double>& scores, double threshold) {
    if (scores.empty()) throw std::invalid_argument("asr: empty score list");
    std::size_t hits = 0;
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("asr: non-finite score");
        if (s > threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double entropy_bits(const std::vector<double>& w) {
    if (w.empty()) throw std::invalid_argument("entropy_bits: empty weights");
    double sum = 0.0;
    for (double p : w) {
        if (p < -1e-9) throw std::invalid_argument("entropy_bits: negative weight");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("entropy_bits: weights must sum to 1");
    return entropy_bits_of(w);
}

double thm1_oracle(const std::vector<Thm1Point>& points) {
    double max_dev = 0.0;
    for (const auto& pt : points) {
        if (pt.joint_weight.size() != pt.score.size() || pt.joint_weight.empty())
            throw std::invalid_argument("thm1_oracle: malformed point");
        double total = 0.0;
        double lo = pt.score[0], hi = pt.score[0];
        for (std::size_t i = 0; i < pt.joint_weight.size(); ++i) {
            if (pt.joint_weight[i] < 0.0)
                throw std::invalid_argument("thm1_oracle: negative weight");
            total += pt.joint_weight[i];
            lo = std::min(lo, pt.score[i]);
            hi = std::max(hi, pt.score[i]);
        }
        if (total <= 0.0) throw std::invalid_argument("thm1_oracle: zero total weight at a point");

        // route A: minimize sum_i jw_i (s - a_i)^2 by bisecting its derivative
        auto deriv = [&](double s) {
            double d = 0.0;
            for (std::size_t i = 0; i < pt.joint_weight.size(); ++i)
                d += 2.0 * pt.joint_weight[i] * (s - pt.score[i]);
            return d;
        };
        double a = lo, b = hi;
        if (a == b) {
            // all scores equal: minimizer is that score
        } else {
            for (int it = 0; it < 200 && b - a > 0.0; ++it) {
                const double mid = 0.5 * (a + b);
                if (deriv(mid) > 0.0)
                    b = mid;
                else
                    a = mid;
            }
        }
        const double s_star = 0.5 * (a + b);

        // route B: the posterior-weighted average of per-task scores
        double avg = 0.0;
        for (std::size_t i = 0; i < pt.joint_weight.size(); ++i)
            avg += (pt.joint_weight[i] / total) * pt.score[i];

        max_dev = std::max(max_dev, std::abs(s_star - avg));
    }
    return max_dev;
}

bool prop2_check(const NoiseSchedule& sched,
                 const std::vector<std::pair<Tensor, Tensor>>& pairs, Rng& rng,
                 std::string* detail) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const Tensor& x0 = pairs[p].first;
        const Tensor& x1 = pairs[p].second;
        const Tensor at0 = sample_bridge_point(sched, x0, x1, 0, rng);
        if (at0.data != x0.data) {
            if (detail) *detail = "pair " + std::to_string(p) + ": draw at n=0 differs from x0";
            return false;
        }
        const Tensor at1 = sample_bridge_point(sched, x0, x1, sched.n_steps, rng);
        if (at1.data != x1.data) {
            if (detail)
                *detail = "pair " + std::to_string(p) + ": draw at n=n_steps differs from x1";
            return false;
        }
    }
    // near t=0 the law concentrates: 1k draws stay within 6 sigma of the mean
    if (!pairs.empty() && sched.n_steps >= 2) {
        const Tensor& x0 = pairs.front().first;
        const Tensor& x1 = pairs.front().second;
        const PosteriorParams pp = posterior_params(sched, 0, 1, sched.n_steps);
        const double bound = 6.0 * std::sqrt(pp.var);
        for (int d = 0; d < 1000; ++d) {
            const Tensor xt = sample_bridge_point(sched, x0, x1, 1, rng);
            for (std::size_t i = 0; i < xt.size(); ++i) {
                const double mu = pp.coef0 * x0.data[i] + pp.coef1 * x1.data[i];
                if (std::abs(xt.data[i] - mu) > bound) {
                    if (detail) *detail = "n=1 draw strayed beyond 6 sigma";
                    return false;
                }
            }
        }
    }
    if (detail) *detail = "ok";
    return true;
}

InvertResult invert_trigger(const MixBridgeModel& model, const NoiseSchedule& sched,
                            const std::vector<Tensor>& clean_inputs, double lambda_def,
                            int steps, double lr, double init_noise, Rng* rng) {
    if (clean_inputs.empty()) throw std::invalid_argument("invert_trigger: no inputs");
    if (!(lambda_def > 0.0) || !(lr > 0.0))
        throw std::invalid_argument("invert_trigger: lambda_def and lr must be positive");
    if (init_noise < 0.0 || (init_noise > 0.0 && !rng))
        throw std::invalid_argument("invert_trigger: noisy start needs an rng");
    const auto& k = kernels::ops();
    const int n = sched.n_steps;
    const double sigma1 = sched.sigma(n);
    const std::size_t dim = clean_inputs.front().size();
    const double inv_count = 1.0 / static_cast<double>(clean_inputs.size());

    // eps at the clean points never changes
    std::vector<Tensor> eps_clean;
    eps_clean.reserve(clean_inputs.size());
    for (const Tensor& x : clean_inputs)
        eps_clean.push_back(mix_forward(model, x, n, n, x).eps);

    Tensor tau;
    tau.shape = clean_inputs.front().shape;
    tau.data.assign(dim, 0.0);
    if (init_noise > 0.0)
        for (auto& v : tau.data) v = init_noise * rng->normal();

    auto objective_and_grad = [&](const Tensor& t, std::vector<double>* grad) {
        // v = sigma1 * mean_j [eps(x_j + t) - eps(x_j)] - lambda * t
        std::vector<double> v(dim, 0.0);
        std::vector<MixCache> caches(clean_inputs.size());
        std::vector<Tensor> shifted(clean_inputs.size());
        for (std::size_t j = 0; j < clean_inputs.size(); ++j) {
            shifted[j] = clean_inputs[j];
            for (std::size_t i = 0; i < dim; ++i) shifted[j].data[i] += t.data[i];
            const MixForward fwd = mix_forward_cached(model, shifted[j], n, n, shifted[j], caches[j]);
            for (std::size_t i = 0; i < dim; ++i)
                v[i] += (fwd.eps.data[i] - eps_clean[j].data[i]) * sigma1 * inv_count;
        }
        for (std::size_t i = 0; i < dim; ++i) v[i] -= lambda_def * t.data[i];
        const double obj = k.dot(v.data(), v.data(), dim);
        if (grad) {
            // d obj / d tau = 2 (sigma1 * mean_j J_j^T v - lambda * v); the
            // perturbed input feeds both the experts and the router
            grad->assign(dim, 0.0);
            Tensor up;
            up.shape = t.shape;
            up.data = v;
            MixGrads scratch = zero_grads(model);
            std::vector<double> dx(dim, 0.0);
            for (std::size_t j = 0; j < clean_inputs.size(); ++j) {
                scratch.zero();
                std::fill(dx.begin(), dx.end(), 0.0);
                mix_backward(model, caches[j], up, scratch, nullptr, dx.data(), dx.data());
                k.axpy(2.0 * sigma1 * inv_count, dx.data(), grad->data(), dim);
            }
            k.axpy(-2.0 * lambda_def, v.data(), grad->data(), dim);
        }
        return obj;
    };

    double obj = objective_and_grad(tau, nullptr);
    std::vector<double> grad(dim, 0.0);
    for (int it = 0; it < steps; ++it) {
        obj = objective_and_grad(tau, &grad);
        if (!std::isfinite(obj)) throw std::runtime_error("invert_trigger: objective diverged");
        k.axpy(-lr, grad.data(), tau.data.data(), dim);
    }
    obj = objective_and_grad(tau, nullptr);
    if (!std::isfinite(obj)) throw std::runtime_error("invert_trigger: objective diverged");
    return {std::move(tau), obj};
}

std::string metrics_csv_header() {
    return "task,n,mse,psnr_db,ssim,feat_cos,asr,entropy_bits";
}

std::string metrics_csv_row(const TaskMetrics& m) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(17);
    out << m.task << ',' << m.count << ',' << m.mse << ',' << m.psnr_db << ',' << m.ssim << ','
        << m.feat_cos << ',' << m.asr << ',' << m.entropy_bits;
    return out.str();
}

}  // namespace mixbridge
