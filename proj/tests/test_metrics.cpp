#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "mixbridge/metrics.hpp"
#include "mixbridge/sample.hpp"

using namespace mixbridge;

namespace {

// independent windowed SSIM, straight from the definition
double ssim_brute(const Tensor& a, const Tensor& b, double peak) {
    const int h = static_cast<int>(a.shape[0]);
    const int w = static_cast<int>(a.shape[1]);
    const int win = std::min({8, h, w});
    const double c1 = 0.0001 * peak * peak, c2 = 0.0009 * peak * peak;
    double total = 0.0;
    int count = 0;
    for (int r0 = 0; r0 + win <= h; ++r0)
        for (int c0 = 0; c0 + win <= w; ++c0) {
            std::vector<double> wa, wb;
            for (int r = r0; r < r0 + win; ++r)
                for (int c = c0; c < c0 + win; ++c) {
                    wa.push_back(a.data[static_cast<std::size_t>(r) * w + c]);
                    wb.push_back(b.data[static_cast<std::size_t>(r) * w + c]);
                }
            const double n = static_cast<double>(wa.size());
            double ma = 0.0, mb = 0.0;
            for (std::size_t i = 0; i < wa.size(); ++i) {
                ma += wa[i] / n;
                mb += wb[i] / n;
            }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (std::size_t i = 0; i < wa.size(); ++i) {
                va += (wa[i] - ma) * (wa[i] - ma) / n;
                vb += (wb[i] - mb) * (wb[i] - mb) / n;
                cov += (wa[i] - ma) * (wb[i] - mb) / n;
            }
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

Tensor checkerboard(int side) {
    Tensor t({static_cast<std::size_t>(side), static_cast<std::size_t>(side)});
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            t.data[static_cast<std::size_t>(r) * side + c] = ((r + c) % 2 == 0) ? 1.0 : 0.0;
    return t;
}

}  // namespace

TEST_CASE("pixel metrics on trivial pairs") {
    Tensor a({8, 8}, 0.0), b({8, 8}, 1.0);
    CHECK(mse(a, a) == 0.0);
    CHECK(ssim(a, a) == doctest::Approx(1.0));
    CHECK(psnr_db(a, a) == std::numeric_limits<double>::infinity());
    CHECK(mse(a, b) == doctest::Approx(1.0));
    CHECK(psnr_db(a, b) == doctest::Approx(0.0));
}

TEST_CASE("ssim matches the brute-force oracle") {
    const Tensor cb = checkerboard(16);
    Tensor inv({16, 16});
    for (std::size_t i = 0; i < inv.size(); ++i) inv.data[i] = 1.0 - cb.data[i];

    const double expect = ssim_brute(cb, inv, 1.0);
    CHECK(ssim(cb, inv) == doctest::Approx(expect).epsilon(1e-12));
    // frozen value from an independent script
    CHECK(ssim(cb, inv) == doctest::Approx(-0.996406468356957).epsilon(1e-12));

    Rng rng(4);
    Tensor x({16, 16}), y({16, 16});
    for (auto& v : x.data) v = rng.uniform();
    for (auto& v : y.data) v = rng.uniform();
    CHECK(ssim(x, y) == doctest::Approx(ssim_brute(x, y, 1.0)).epsilon(1e-12));
}

TEST_CASE("metric symmetry") {
    Rng rng(6);
    Tensor x({12, 12}), y({12, 12});
    for (auto& v : x.data) v = rng.uniform();
    for (auto& v : y.data) v = rng.uniform();
    const FrozenEmbedder emb = FrozenEmbedder::create(x.size(), 99);
    CHECK(std::abs(mse(x, y) - mse(y, x)) <= 1e-12);
    CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-12);
    CHECK(std::abs(feature_cos(x, y, emb) - feature_cos(y, x, emb)) <= 1e-12);
}

TEST_CASE("frozen embedder cosine") {
    Rng rng(8);
    Tensor a({8, 8});
    for (auto& v : a.data) v = 2.0 * rng.uniform() - 1.0;
    const FrozenEmbedder emb = FrozenEmbedder::create(64, 123);

    SUBCASE("identical inputs give cosine 1") {
        CHECK(feature_cos(a, a, emb) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("negated input gives -1 through the odd embedder") {
        Tensor na({8, 8});
        for (std::size_t i = 0; i < 64; ++i) na.data[i] = -a.data[i];
        CHECK(feature_cos(a, na, emb) == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("matches an independent cosine computation") {
        Tensor b({8, 8});
        for (auto& v : b.data) v = 2.0 * rng.uniform() - 1.0;
        const auto ea = emb.embed(a);
        const auto eb = emb.embed(b);
        long double dot = 0.0L, na = 0.0L, nb = 0.0L;
        for (std::size_t i = 0; i < ea.size(); ++i) {
            dot += static_cast<long double>(ea[i]) * eb[i];
            na += static_cast<long double>(ea[i]) * ea[i];
            nb += static_cast<long double>(eb[i]) * eb[i];
        }
        const double expect = static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
        CHECK(feature_cos(a, b, emb) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("zero input has zero-norm embedding, cosine defined as 0") {
        Tensor zero({8, 8}, 0.0);
        CHECK(feature_cos(zero, a, emb) == 0.0);
    }
    SUBCASE("identical embedders across a run") {
        const FrozenEmbedder again = FrozenEmbedder::create(64, 123);
        CHECK(again.proj == emb.proj);
    }
}

TEST_CASE("attack success rate") {
    CHECK(asr({1.0, 1.0, 1.0}) == 1.0);
    CHECK(asr({0.7, 0.7, 0.7}) == 0.0);  // strict inequality
    CHECK(asr({0.9, 0.5, 0.8, 0.1}) == doctest::Approx(0.5));
    CHECK_THROWS(asr({}));

    SUBCASE("raising the threshold never raises the rate") {
        Rng rng(5);
        std::vector<double> scores;
        for (int i = 0; i < 200; ++i) scores.push_back(rng.uniform());
        double prev = 1.0;
        for (double thr = 0.0; thr <= 1.0; thr += 0.05) {
            const double rate = asr(scores, thr);
            CHECK(rate <= prev + 1e-15);
            prev = rate;
        }
    }
}

TEST_CASE("entropy in bits") {
    CHECK(entropy_bits({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(entropy_bits({1.0, 0.0, 0.0}) == 0.0);
    CHECK(entropy_bits({0.5, 0.5}) == doctest::Approx(1.0).epsilon(1e-12));
    for (int m = 0; m <= 8; ++m) {
        std::vector<double> w(static_cast<std::size_t>(m) + 1,
                              1.0 / static_cast<double>(m + 1));
        CHECK(std::abs(entropy_bits(w) - std::log2(static_cast<double>(m + 1))) <= 1e-12);
    }
    CHECK_THROWS(entropy_bits({0.5, 0.6}));
    CHECK_THROWS(entropy_bits({}));
}

TEST_CASE("tabular mixed-objective oracle") {
    SUBCASE("single task: minimizer equals that score") {
        CHECK(thm1_oracle({{{2.0}, {1.234}}}) <= 1e-12);
    }
    SUBCASE("two tasks, equal weights: midpoint") {
        Thm1Point pt{{0.5, 0.5}, {1.0, 3.0}};
        CHECK(thm1_oracle({pt}) <= 1e-12);
    }
    SUBCASE("weighted three-task point agrees with the closed form") {
        Thm1Point pt{{0.2, 0.3, 0.5}, {-1.0, 0.5, 2.0}};
        CHECK(thm1_oracle({pt}) <= 1e-12);
    }
    SUBCASE("1000 random points stay under 1e-10") {
        Rng rng(17);
        std::vector<Thm1Point> pts;
        for (int i = 0; i < 1000; ++i) {
            Thm1Point pt;
            const std::size_t tasks = 1 + rng.uniform_index(5);
            for (std::size_t t = 0; t < tasks; ++t) {
                pt.joint_weight.push_back(rng.uniform() + 1e-9);
                pt.score.push_back(10.0 * (2.0 * rng.uniform() - 1.0));
            }
            pts.push_back(std::move(pt));
        }
        CHECK(thm1_oracle(pts) < 1e-10);
    }
    SUBCASE("zero total weight rejected") {
        CHECK_THROWS(thm1_oracle({{{0.0, 0.0}, {1.0, 2.0}}}));
    }
}

TEST_CASE("endpoint-delta check on a random dataset") {
    const auto sched = make_linear_schedule(100, 1e-4, 2e-2);
    Rng rng(33);
    std::vector<std::pair<Tensor, Tensor>> pairs;
    for (int i = 0; i < 10; ++i) {
        Tensor x0({3, 3}), x1({3, 3});
        for (auto& v : x0.data) v = rng.uniform();
        for (auto& v : x1.data) v = rng.uniform();
        pairs.emplace_back(std::move(x0), std::move(x1));
    }
    std::string detail;
    CHECK(prop2_check(sched, pairs, rng, &detail));
    CHECK(detail == "ok");
}

TEST_CASE("trigger inversion probe basics") {
    Rng rng(3);
    auto model = MixBridgeModel::create(9, {6}, 2, {6}, 4, 1, rng);  // zero-init outputs
    const auto sched = make_linear_schedule(10, 1e-3, 2e-2);
    std::vector<Tensor> inputs;
    for (int i = 0; i < 3; ++i) {
        Tensor t({3, 3});
        for (auto& v : t.data) v = rng.uniform();
        inputs.push_back(std::move(t));
    }

    SUBCASE("zero-output model: objective minimized at tau = 0") {
        const InvertResult res = invert_trigger(model, sched, inputs, 0.01, 25, 0.1);
        for (double v : res.tau.data) CHECK(v == 0.0);
        CHECK(res.objective == 0.0);
    }
    SUBCASE("zero steps returns tau = 0") {
        const InvertResult res = invert_trigger(model, sched, inputs, 0.01, 0, 0.1);
        for (double v : res.tau.data) CHECK(v == 0.0);
    }
    SUBCASE("bad arguments rejected") {
        CHECK_THROWS(invert_trigger(model, sched, {}, 0.01, 5, 0.1));
        CHECK_THROWS(invert_trigger(model, sched, inputs, 0.0, 5, 0.1));
        CHECK_THROWS(invert_trigger(model, sched, inputs, 0.01, 5, 0.0));
    }
    SUBCASE("descends the objective on a non-trivial model") {
        // give experts some signal so the inversion has something to chew on
        Rng wrng(9);
        for (std::size_t e = 0; e < model.n_experts(); ++e)
            for (auto& v : model.expert(e).net.layers.back().w)
                v = 0.1 * (2.0 * wrng.uniform() - 1.0);
        const InvertResult short_run = invert_trigger(model, sched, inputs, 0.01, 2, 0.05);
        const InvertResult long_run = invert_trigger(model, sched, inputs, 0.01, 60, 0.05);
        CHECK(long_run.objective <= short_run.objective + 1e-12);
        CHECK(std::isfinite(long_run.objective));
    }
}

TEST_CASE("metrics csv layout") {
    CHECK(metrics_csv_header() == "task,n,mse,psnr_db,ssim,feat_cos,asr,entropy_bits");
    TaskMetrics m;
    m.task = 2;
    m.count = 4;
    m.mse = 0.5;
    const std::string row = metrics_csv_row(m);
    CHECK(row.rfind("2,4,0.5,", 0) == 0);
}
