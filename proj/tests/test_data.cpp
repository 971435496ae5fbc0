#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "mixbridge/data.hpp"

using namespace mixbridge;

namespace {
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() / ("mb_data_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}
}  // namespace

TEST_CASE("box blur of a constant image is that constant, including borders") {
    Tensor img({8, 8}, 0.37);
    const Tensor blurred = box_blur3(img);
    for (double v : blurred.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("deblur task couples sharp targets with their blur") {
    Rng rng(5);
    const auto ds = gen_benign_task(BenignKind::deblur, 4, 16, rng);
    CHECK(ds.pairs.size() == 4);
    CHECK(ds.task == 0);
    for (const auto& [x0, x1] : ds.pairs) {
        const Tensor expect = box_blur3(x0);
        CHECK(x1.data == expect.data);
    }
    CHECK_THROWS(gen_benign_task(BenignKind::deblur, 0, 16, rng));
    CHECK_THROWS(gen_benign_task(BenignKind::deblur, 4, 7, rng));
}

TEST_CASE("inpaint rectangle hits the requested area exactly when representable") {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        const InpaintRect r = inpaint_rect(16, 0.25, rng);
        CHECK(r.cells() == 64);  // floor(0.25 * 256)
        CHECK(r.row >= 0);
        CHECK(r.col >= 0);
        CHECK(r.row + r.height <= 16);
        CHECK(r.col + r.width <= 16);
    }
    const auto ds = gen_benign_task(BenignKind::inpaint_toy, 8, 16, rng);
    for (const auto& [x0, x1] : ds.pairs) {
        int zeroed = 0;
        for (std::size_t i = 0; i < x0.size(); ++i)
            if (x1.data[i] == 0.0 && x0.data[i] != 0.0) ++zeroed;
        CHECK(zeroed <= static_cast<int>(0.3 * 256) + 1);
    }
}

TEST_CASE("dataset generation is seed-deterministic") {
    Rng a(99), b(99);
    const auto da = gen_benign_task(BenignKind::deblur, 6, 16, a);
    const auto db = gen_benign_task(BenignKind::deblur, 6, 16, b);
    for (std::size_t i = 0; i < da.pairs.size(); ++i) {
        CHECK(da.pairs[i].first.data == db.pairs[i].first.data);
        CHECK(da.pairs[i].second.data == db.pairs[i].second.data);
    }
}

TEST_CASE("trigger blending") {
    Rng rng(3);
    Tensor x({4, 4});
    for (auto& v : x.data) v = rng.uniform();

    SUBCASE("all-zero mask leaves the input bit-identical") {
        TriggerSpec t{Tensor({4, 4}, 0.0), Tensor({4, 4}, 0.9), 1};
        CHECK(apply_trigger(x, t).data == x.data);
    }
    SUBCASE("all-one mask returns the pattern bit-identical") {
        TriggerSpec t{Tensor({4, 4}, 1.0), Tensor({4, 4}, 0.9), 1};
        CHECK(apply_trigger(x, t).data == t.pattern.data);
    }
    SUBCASE("2x2 corner mask changes exactly those 4 cells") {
        const TriggerSpec t = corner_trigger(4, 2, 0, 1.0);
        const Tensor out = apply_trigger(x, t);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * 4 + c;
                if (r < 2 && c < 2)
                    CHECK(out.data[i] == 1.0);
                else
                    CHECK(out.data[i] == x.data[i]);
            }
    }
    SUBCASE("non-binary mask rejected") {
        TriggerSpec t{Tensor({4, 4}, 0.5), Tensor({4, 4}, 0.9), 1};
        CHECK_THROWS(apply_trigger(x, t));
    }
    SUBCASE("idempotence, exactly") {
        const TriggerSpec t = corner_trigger(4, 2, 3, 0.75);
        const Tensor once = apply_trigger(x, t);
        const Tensor twice = apply_trigger(once, t);
        CHECK(once.data == twice.data);
    }
    SUBCASE("disjoint triggers commute, exactly") {
        const TriggerSpec a = corner_trigger(4, 2, 0, 1.0);
        const TriggerSpec b = corner_trigger(4, 2, 3, 0.25);
        const Tensor ab = apply_trigger(apply_trigger(x, a), b);
        const Tensor ba = apply_trigger(apply_trigger(x, b), a);
        CHECK(ab.data == ba.data);
    }
}

TEST_CASE("corner triggers use disjoint supports") {
    for (int side : {8, 16}) {
        Tensor sum({static_cast<std::size_t>(side), static_cast<std::size_t>(side)}, 0.0);
        for (int corner = 0; corner < 4; ++corner) {
            const TriggerSpec t = corner_trigger(side, 3, corner);
            for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] += t.mask.data[i];
        }
        for (double v : sum.data) CHECK(v <= 1.0);
    }
    CHECK_THROWS(corner_trigger(8, 9, 0));
    CHECK_THROWS(corner_trigger(8, 3, 4));
}

TEST_CASE("nearest-neighbor pairing") {
    Rng rng(11);
    MaliciousBank bank = gen_malicious_bank(10, 8, 1, rng);

    SUBCASE("singleton bank pairs everything with that image") {
        MaliciousBank one;
        one.images.push_back(bank.images[0]);
        std::vector<Tensor> inputs;
        for (int i = 0; i < 5; ++i) {
            Tensor t({8, 8});
            for (auto& v : t.data) v = rng.uniform();
            inputs.push_back(std::move(t));
        }
        const auto ds = pair_malicious(inputs, one, 1);
        for (const auto& p : ds.pairs) CHECK(p.first.data == one.images[0].data);
    }
    SUBCASE("input equal to a bank image pairs with it at distance zero") {
        const auto ds = pair_malicious({bank.images[7]}, bank, 1);
        CHECK(ds.pairs[0].first.data == bank.images[7].data);
    }
    SUBCASE("pairing matches the exhaustive distance table") {
        std::vector<Tensor> inputs;
        for (int i = 0; i < 5; ++i) {
            Tensor t({8, 8});
            for (auto& v : t.data) v = rng.uniform();
            inputs.push_back(std::move(t));
        }
        const auto ds = pair_malicious(inputs, bank, 2);
        CHECK(ds.task == 2);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            // brute force: no bank image strictly closer than the chosen one
            double chosen = 0.0;
            for (std::size_t j = 0; j < 64; ++j) {
                const double d = inputs[i].data[j] - ds.pairs[i].first.data[j];
                chosen += d * d;
            }
            for (const Tensor& m : bank.images) {
                double dist = 0.0;
                for (std::size_t j = 0; j < 64; ++j) {
                    const double d = inputs[i].data[j] - m.data[j];
                    dist += d * d;
                }
                CHECK(dist >= chosen);
            }
        }
    }
    SUBCASE("ties break to the lowest bank index") {
        MaliciousBank dup;
        dup.images.push_back(bank.images[3]);
        dup.images.push_back(bank.images[3]);
        Tensor probe({8, 8}, 0.5);
        const auto ds = pair_malicious({probe}, dup, 1);
        CHECK(ds.pairs[0].first.data == dup.images[0].data);
    }
    SUBCASE("empty bank rejected") {
        CHECK_THROWS(pair_malicious({bank.images[0]}, MaliciousBank{}, 1));
    }
}

TEST_CASE("mixture spec validation") {
    CHECK_THROWS(MixtureSpec(0.5, {0.4}));             // sums to 0.9
    CHECK_THROWS(MixtureSpec(-0.1, {1.1}));            // negative
    CHECK_NOTHROW(MixtureSpec(0.25, {0.25, 0.25, 0.25}));
    const auto eq = MixtureSpec::equal(3);
    CHECK(eq.p_clean == doctest::Approx(0.25));
    const auto pr = MixtureSpec::poison_rate(0.1, 2);
    CHECK(pr.p_clean == doctest::Approx(0.9));
    CHECK(pr.p_attack[0] == doctest::Approx(0.05));
}

TEST_CASE("mixture batch sampling") {
    Rng rng(21);
    PairDataset clean = gen_benign_task(BenignKind::deblur, 8, 8, rng);
    PairDataset att = clean;
    att.task = 1;

    SUBCASE("pure clean mixture yields only clean items") {
        const auto batch = sample_mixture_batch({&clean, &att}, MixtureSpec(1.0, {0.0}), 64, rng);
        for (const auto& it : batch) CHECK(it.task == 0);
    }
    SUBCASE("equal proportions over 4 tasks within 3 SE on 100k draws") {
        PairDataset a2 = clean, a3 = clean;
        a2.task = 2;
        a3.task = 3;
        const auto spec = MixtureSpec::equal(3);
        const int n = 100000;
        std::vector<int> counts(4, 0);
        const auto batch = sample_mixture_batch({&clean, &att, &a2, &a3}, spec, n, rng);
        for (const auto& it : batch) counts[static_cast<std::size_t>(it.task)]++;
        const double se = std::sqrt(0.25 * 0.75 / n);
        for (int c : counts)
            CHECK(std::abs(static_cast<double>(c) / n - 0.25) < 3.0 * se);
    }
    SUBCASE("empty batch is fine") {
        CHECK(sample_mixture_batch({&clean, &att}, MixtureSpec::equal(1), 0, rng).empty());
    }
    SUBCASE("missing dataset for a positive-probability task rejected") {
        CHECK_THROWS(sample_mixture_batch({&clean, nullptr}, MixtureSpec::equal(1), 4, rng));
        PairDataset empty;
        empty.task = 1;
        CHECK_THROWS(sample_mixture_batch({&clean, &empty}, MixtureSpec::equal(1), 4, rng));
    }
    SUBCASE("zero-probability task may be missing") {
        CHECK_NOTHROW(sample_mixture_batch({&clean, nullptr}, MixtureSpec(1.0, {0.0}), 4, rng));
    }
}

TEST_CASE("pgm round-trip is bit-exact after one quantization") {
    TempDir tmp;
    Rng rng(8);
    Tensor img({16, 16});
    for (auto& v : img.data) v = rng.uniform();
    const auto p1 = (tmp.path / "a.pgm").string();
    const auto p2 = (tmp.path / "b.pgm").string();
    pgm_save(p1, img);
    const Tensor loaded = pgm_load(p1);
    pgm_save(p2, loaded);
    CHECK(slurp(p1) == slurp(p2));
    const Tensor again = pgm_load(p2);
    CHECK(loaded.data == again.data);

    CHECK_THROWS(pgm_load((tmp.path / "missing.pgm").string()));
}

TEST_CASE("dataset directory dump and reload") {
    TempDir tmp;
    Rng rng(13);
    std::vector<PairDataset> sets;
    sets.push_back(gen_benign_task(BenignKind::deblur, 3, 8, rng));
    PairDataset att = sets[0];
    att.task = 2;
    sets.push_back(att);

    const std::string dir = (tmp.path / "ds").string();
    dataset_save(dir, sets);
    const auto loaded = dataset_load(dir);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].task == 0);
    CHECK(loaded[1].task == 2);
    CHECK(loaded[0].pairs.size() == 3);

    // quantized values reload exactly
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t i = 0; i < 64; ++i) {
            const double q = std::round(255.0 * std::clamp(sets[0].pairs[j].first.data[i], 0.0, 1.0)) / 255.0;
            CHECK(loaded[0].pairs[j].first.data[i] == doctest::Approx(q).epsilon(1e-15));
        }
    }
    CHECK_THROWS(dataset_load((tmp.path / "nope").string()));
}
