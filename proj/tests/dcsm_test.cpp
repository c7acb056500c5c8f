#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>

#include "prseg/dcsm.hpp"
#include "prseg/rng.hpp"
#include "support/gradcheck.hpp"

using namespace prseg;
using prseg::testing::check_gradient;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = uniform(rng, lo, hi);
    return Tensor::from_data(std::move(shape), std::move(data));
}

DcsmParams random_params(int c, Rng& rng) {
    DcsmParams p = make_dcsm_params(c, 0.5);
    p.weight = random_tensor({c, c}, rng, -0.5, 0.5);
    p.bias = random_tensor({c}, rng, -0.5, 0.5);
    p.weight.set_requires_grad(true);
    p.bias.set_requires_grad(true);
    return p;
}

}  // namespace

TEST_CASE("predict_probs is sigmoid(fc(pool))", "[dcsm]") {
    // zero weights pin every probability at one half
    const DcsmParams zero = make_dcsm_params(4, 0.5);
    const Tensor f = Tensor::from_data({4, 1, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(predict_probs(f, zero).data() == std::vector<double>(4, 0.5));

    Rng rng = seeded(41);
    const DcsmParams p = random_params(3, rng);
    const Tensor g = random_tensor({3, 2, 2}, rng);
    const Tensor probs = predict_probs(g, p);
    for (double v : probs.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK_THROWS_AS(predict_probs(Tensor::zeros({5, 2, 2}), p), std::invalid_argument);
}

TEST_CASE("predict_probs ignores spatial arrangement", "[dcsm]") {
    Rng rng = seeded(42);
    const DcsmParams p = random_params(3, rng);
    // integer entries make the pooled mean independent of summation order
    std::vector<double> vals(3 * 4);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(uniform_int(rng, -5, 5));
    const Tensor f = Tensor::from_data({3, 2, 2}, vals);

    const int perm[4] = {2, 0, 3, 1};
    std::vector<double> shuffled(vals.size());
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) shuffled[static_cast<std::size_t>(c * 4 + perm[i])] = vals[static_cast<std::size_t>(c * 4 + i)];
    const Tensor g = Tensor::from_data({3, 2, 2}, shuffled);

    CHECK(predict_probs(f, p).data() == predict_probs(g, p).data());
}

TEST_CASE("predict_probs gradients", "[dcsm]") {
    Rng rng = seeded(43);
    DcsmParams p = random_params(3, rng);
    Tensor f = random_tensor({3, 2, 2}, rng);
    f.set_requires_grad(true);
    auto loss = [&] { return sum(mul(predict_probs(f, p), predict_probs(f, p))); };
    CHECK(check_gradient(loss, f).max_rel < 1e-4);
    CHECK(check_gradient(loss, p.weight).max_rel < 1e-4);
    CHECK(check_gradient(loss, p.bias).max_rel < 1e-4);
}

TEST_CASE("select_inference picks the top floor(rho C) with index ties", "[dcsm]") {
    const Tensor p = Tensor::from_data({4}, {0.9, 0.1, 0.5, 0.3});
    CHECK(select_inference(p, 0.5).data() == std::vector<double>{1, 0, 1, 0});
    CHECK(select_inference(p, 0.0).data() == std::vector<double>{0, 0, 0, 0});
    CHECK(select_inference(p, 1.0).data() == std::vector<double>{1, 1, 1, 1});

    const Tensor equal = Tensor::from_data({4}, {0.7, 0.7, 0.7, 0.7});
    CHECK(select_inference(equal, 0.5).data() == std::vector<double>{1, 1, 0, 0});

    // floor semantics on odd counts
    const Tensor five = Tensor::from_data({5}, {0.9, 0.8, 0.7, 0.6, 0.5});
    double ones = 0;
    const Tensor five_sel = select_inference(five, 0.5);
    for (double v : five_sel.data()) ones += v;
    CHECK(ones == 2.0);

    // only the ordering matters, not the scale
    Rng rng = seeded(44);
    const Tensor raw = random_tensor({9}, rng);
    const Tensor scaled = affine(raw, 2.5, 0.125);
    CHECK(select_inference(raw, 0.5).data() == select_inference(scaled, 0.5).data());
}

TEST_CASE("rotate_count floors rho C", "[dcsm]") {
    CHECK(rotate_count(0.5, 4) == 2);
    CHECK(rotate_count(0.5, 5) == 2);
    CHECK(rotate_count(0.0, 10) == 0);
    CHECK(rotate_count(1.0, 10) == 10);
    CHECK(rotate_count(0.3, 10) == 3);  // must survive 0.3 not being exact in binary
    CHECK(rotate_count(0.7, 10) == 7);
}

TEST_CASE("select_training emits exact binaries, reproducibly", "[dcsm]") {
    Rng rng = seeded(45);
    const Tensor p = random_tensor({16}, rng, 0.05, 0.95);
    for (int t = 0; t < 50; ++t) {
        const Tensor q = select_training(p, 1.0, rng);
        for (double v : q.data()) CHECK((v == 0.0 || v == 1.0));
    }

    Rng r1 = seeded(46), r2 = seeded(46);
    CHECK(select_training(p, 0.7, r1).data() == select_training(p, 0.7, r2).data());

    // exact 0/1 probabilities clamp instead of producing nan
    const Tensor hard = Tensor::from_data({2}, {0.0, 1.0});
    Rng r3 = seeded(47);
    const Tensor q = select_training(hard, 1.0, r3);
    for (double v : q.data()) CHECK(std::isfinite(v));

    CHECK_THROWS_AS(select_training(p, 0.0, rng), std::invalid_argument);
}

TEST_CASE("select_training sampling frequencies", "[dcsm]") {
    // near-one probability at low temperature: almost always selected
    {
        Rng rng = seeded(48);
        const Tensor p = Tensor::from_data({8}, std::vector<double>(8, 1.0 - 1e-7));
        int hits = 0, draws = 0;
        for (int t = 0; t < 1250; ++t) {
            const Tensor q = select_training(p, 0.1, rng);
            for (double v : q.data()) {
                hits += v == 1.0;
                ++draws;
            }
        }
        CHECK(draws == 10000);
        CHECK(static_cast<double>(hits) / draws > 0.99);
    }
    // a fair probability selects half the time
    {
        Rng rng = seeded(49);
        const Tensor p = Tensor::from_data({8}, std::vector<double>(8, 0.5));
        int hits = 0;
        for (int t = 0; t < 1250; ++t) {
            const Tensor q = select_training(p, 1.0, rng);
            for (double v : q.data()) hits += v == 1.0;
        }
        CHECK(std::abs(hits / 10000.0 - 0.5) < 0.02);
    }
    // the expected count tracks sum(P) for mixed probabilities
    {
        Rng rng = seeded(50);
        const Tensor p = Tensor::from_data({4}, {0.1, 0.3, 0.7, 0.9});
        double total = 0;
        const int trials = 4000;
        for (int t = 0; t < trials; ++t) {
            const Tensor q = select_training(p, 1.0, rng);
            for (double v : q.data()) total += v;
        }
        CHECK(std::abs(total / trials - 2.0) < 0.05);
    }
}

TEST_CASE("straight-through gradient matches the soft relaxation", "[dcsm]") {
    const double tau = 0.7;
    Rng rng = seeded(51);
    Tensor p = random_tensor({6}, rng, 0.1, 0.9);
    p.set_requires_grad(true);

    Rng draw = seeded(52);
    const Tensor q = select_training(p, tau, draw);
    p.zero_grad();
    backward(sum(q));

    Rng replay = seeded(52);
    for (int i = 0; i < 6; ++i) {
        const double g1 = gumbel(replay);
        const double g0 = gumbel(replay);
        const double pc = std::clamp(p[static_cast<std::size_t>(i)], kProbClamp, 1.0 - kProbClamp);
        const double z = (std::log(pc) - std::log(1.0 - pc) + g1 - g0) / tau;
        const double soft = 1.0 / (1.0 + std::exp(-z));
        const double expected = soft * (1.0 - soft) / (tau * pc * (1.0 - pc));
        CHECK(p.grad()[static_cast<std::size_t>(i)] == Catch::Approx(expected).epsilon(1e-10));
        CHECK(p.grad()[static_cast<std::size_t>(i)] != 0.0);
    }
}

TEST_CASE("selected_indices reads ascending set bits", "[dcsm]") {
    CHECK(selected_indices(Tensor::from_data({4}, {1, 0, 0, 1})) == std::vector<int>{0, 3});
    CHECK(selected_indices(Tensor::from_data({3}, {0, 0, 0})).empty());
    CHECK_THROWS_AS(selected_indices(Tensor::from_data({2}, {0.5, 1.0})), std::invalid_argument);
}

TEST_CASE("select_channels dispatches on mode", "[dcsm]") {
    Rng rng = seeded(53);
    const DcsmParams params = random_params(8, rng);
    const Tensor f = random_tensor({8, 2, 2}, rng);

    Rng r1 = seeded(54);
    const ChannelSelection inf = select_channels(f, params, Mode::inference, r1);
    double count = 0;
    for (double v : inf.indicator.data()) count += v;
    CHECK(count == 4.0);
    CHECK(inf.mode == Mode::inference);

    Rng r2 = seeded(54);
    const ChannelSelection tr = select_channels(f, params, Mode::training, r2);
    CHECK(tr.probs.data() == inf.probs.data());
    for (double v : tr.indicator.data()) CHECK((v == 0.0 || v == 1.0));
}
