#include <doctest.h>

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "acpg/etf.hpp"
#include "acpg/net.hpp"

using namespace acpg;
using net::PolicyNet;

namespace {

// All learnable parameter locations of a net, in a fixed order, paired with
// the matching tape locations.
struct ParamView {
    std::vector<double*> params;
    std::vector<const double*> grads;
};

ParamView view(PolicyNet& n, const net::GradientTape& tape) {
    ParamView v;
    for (std::size_t l = 0; l < n.backbone.size(); ++l) {
        for (std::size_t i = 0; i < n.backbone[l].w.data.size(); ++i) {
            v.params.push_back(&n.backbone[l].w.data[i]);
            v.grads.push_back(&tape.backbone[l].w.data[i]);
        }
        for (std::size_t i = 0; i < n.backbone[l].b.size(); ++i) {
            v.params.push_back(&n.backbone[l].b[i]);
            v.grads.push_back(&tape.backbone[l].b[i]);
        }
    }
    if (!n.frozen)
        for (std::size_t i = 0; i < n.head.data.size(); ++i) {
            v.params.push_back(&n.head.data[i]);
            v.grads.push_back(&tape.head.data[i]);
        }
    return v;
}

// Scalar loss sum_s coeff[s] * (-log p[action[s]]).
double eval_loss(const PolicyNet& n, const std::vector<Vec>& states,
                 const std::vector<int>& actions, const Vec& coeff) {
    double loss = 0.0;
    for (std::size_t s = 0; s < states.size(); ++s) {
        auto r = net::forward(n, states[s]);
        loss += coeff[s] * -std::log(r.probs[actions[s]]);
    }
    return loss;
}

std::vector<Vec> loss_dlogits(const PolicyNet& n, const std::vector<Vec>& states,
                              const std::vector<int>& actions, const Vec& coeff) {
    std::vector<Vec> dl;
    for (std::size_t s = 0; s < states.size(); ++s) {
        auto r = net::forward(n, states[s]);
        Vec g = r.probs;
        g[actions[s]] -= 1.0;
        scale(g, coeff[s]);
        dl.push_back(std::move(g));
    }
    return dl;
}

// Central finite differences against the backprop tape. Passes when every
// coordinate matches to 1e-5 relative (1e-8 absolute floor).
double max_grad_error(PolicyNet& n, const std::vector<Vec>& states,
                      const std::vector<int>& actions, const Vec& coeff) {
    auto cache = net::forward_batch(n, states);
    auto tape = net::backward(n, cache, loss_dlogits(n, states, actions, coeff));
    ParamView v = view(n, tape);

    const double step = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < v.params.size(); ++i) {
        double saved = *v.params[i];
        *v.params[i] = saved + step;
        double up = eval_loss(n, states, actions, coeff);
        *v.params[i] = saved - step;
        double down = eval_loss(n, states, actions, coeff);
        *v.params[i] = saved;
        double fd = (up - down) / (2.0 * step);
        double bp = *v.grads[i];
        double diff = std::abs(fd - bp);
        if (diff <= 1e-8) continue;
        worst = std::max(worst, diff / std::max({std::abs(fd), std::abs(bp), 1e-300}));
    }
    return worst;
}

std::vector<Vec> random_states(int count, int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    std::vector<Vec> states(count, Vec(dim));
    for (auto& s : states)
        for (double& x : s) x = gauss(rng);
    return states;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace

TEST_CASE("forward: zero parameters give the uniform policy") {
    std::mt19937_64 rng(1);
    PolicyNet n = net::make_net(3, {5, 4}, 6, rng);
    for (auto& l : n.backbone) {
        for (double& x : l.w.data) x = 0.0;
        for (double& x : l.b) x = 0.0;
    }
    for (double& x : n.head.data) x = 0.0;
    auto r = net::forward(n, {0.3, -0.2, 0.9});
    for (double p : r.probs) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("forward: probabilities sum to one and stay positive") {
    std::mt19937_64 rng(2);
    PolicyNet n = net::make_net(4, {8, 6}, 3, rng);
    for (const auto& s : random_states(20, 4, rng)) {
        auto r = net::forward(n, s);
        double sum = 0.0;
        for (double p : r.probs) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(static_cast<int>(r.h.size()) == 6);
        CHECK(static_cast<int>(r.logits.size()) == 3);
    }
}

TEST_CASE("frozen ETF head ranks its own class first at the collapse target") {
    etf::EtfMatrix m = etf::generate_etf(4, 6, 2.0, 3);
    std::mt19937_64 rng(3);
    PolicyNet n = net::make_net(5, {8, 6}, 4, rng);
    net::freeze_etf_head(n, m);
    double c = std::sqrt(4.0 / m.energy);  // e_h = 4
    for (int k = 0; k < 4; ++k) {
        Vec h = m.column(k);
        scale(h, c);
        Vec probs = softmax(matvec(n.head, h));
        int arg = 0;
        for (int j = 1; j < 4; ++j)
            if (probs[j] > probs[arg]) arg = j;
        CHECK(arg == k);
    }
}

TEST_CASE("forward rejects a state of the wrong width") {
    std::mt19937_64 rng(4);
    PolicyNet n = net::make_net(4, {5}, 2, rng);
    CHECK_THROWS_AS(net::forward(n, Vec{1.0, 2.0}), net::NetError);
}

TEST_CASE("gradient check: plain net") {
    std::mt19937_64 rng(5);
    PolicyNet n = net::make_net(3, {6, 4}, 3, rng);
    auto states = random_states(7, 3, rng);
    std::vector<int> actions = {0, 1, 2, 0, 1, 2, 1};
    Vec coeff = {1.0, -0.5, 2.0, 0.3, -1.2, 0.7, 1.5};
    CHECK(n.param_count() <= 2000);
    CHECK(max_grad_error(n, states, actions, coeff) < 1e-5);
}

TEST_CASE("gradient check: larger net near the size cap") {
    std::mt19937_64 rng(6);
    PolicyNet n = net::make_net(8, {16, 12}, 4, rng);
    auto states = random_states(5, 8, rng);
    std::vector<int> actions = {0, 3, 1, 2, 2};
    Vec coeff = {0.5, 1.0, -0.8, 1.3, -0.4};
    CHECK(n.param_count() <= 2000);
    CHECK(max_grad_error(n, states, actions, coeff) < 1e-5);
}

TEST_CASE("gradient check: frozen head, backbone only") {
    std::mt19937_64 rng(7);
    PolicyNet n = net::make_net(4, {6, 5}, 3, rng);
    etf::EtfMatrix m = etf::generate_etf(3, 5, 1.0, 8);
    net::freeze_etf_head(n, m);
    auto states = random_states(6, 4, rng);
    std::vector<int> actions = {0, 1, 2, 1, 0, 2};
    Vec coeff = {1.0, 0.5, -1.0, 0.25, 2.0, -0.75};
    CHECK(max_grad_error(n, states, actions, coeff) < 1e-5);

    auto cache = net::forward_batch(n, states);
    auto tape = net::backward(n, cache, loss_dlogits(n, states, actions, coeff));
    for (double g : tape.head.data) CHECK(g == 0.0);
}

TEST_CASE("gradient check: active activation-norm cap") {
    std::mt19937_64 rng(8);
    PolicyNet n = net::make_net(3, {6, 4}, 3, rng);

    // Keep only states whose activation is alive, so a cap below every
    // sample's raw activation energy exercises the rescaling branch on the
    // whole batch, away from the boundary.
    std::vector<Vec> states;
    double min_sq = 1e300;
    while (states.size() < 6) {
        Vec s = random_states(1, 3, rng)[0];
        double sq = squared_norm(net::forward(n, s).h);
        if (sq < 1e-2) continue;
        states.push_back(std::move(s));
        min_sq = std::min(min_sq, sq);
    }
    n.activation_cap = 0.5 * min_sq;

    std::vector<int> actions = {1, 0, 2, 2, 1, 0};
    Vec coeff = {1.0, -0.6, 0.8, 1.1, -0.9, 0.4};
    CHECK(max_grad_error(n, states, actions, coeff) < 1e-5);

    // Capped activations respect the budget.
    for (const auto& s : states) {
        auto r = net::forward(n, s);
        CHECK(squared_norm(r.h) <= n.activation_cap * (1.0 + 1e-12));
    }
}

TEST_CASE("backward demands a fresh cache and matching batch size") {
    std::mt19937_64 rng(9);
    PolicyNet n = net::make_net(3, {4}, 2, rng);
    auto states = random_states(3, 3, rng);
    auto cache = net::forward_batch(n, states);
    auto dl = loss_dlogits(n, states, {0, 1, 0}, {1.0, 1.0, 1.0});

    CHECK_THROWS_AS(net::backward(n, cache, {dl[0]}), net::NetError);

    auto tape = net::backward(n, cache, dl);
    net::sgd_step(n, tape, 0.01);
    CHECK_THROWS_AS(net::backward(n, cache, dl), net::StaleCacheError);
}

TEST_CASE("sgd: zero tape leaves parameters, one step matches hand arithmetic") {
    std::mt19937_64 rng(10);
    PolicyNet n = net::make_net(2, {3}, 2, rng);
    std::string before = net::to_json(n);
    auto tape = net::zero_tape(n);
    net::sgd_step(n, tape, 0.5);
    CHECK(net::to_json(n) == before);

    // Gradient of (1/2) w^2 at w = 1 is 1; lr 0.1 moves w to 0.9.
    n.backbone[0].w(0, 0) = 1.0;
    tape.backbone[0].w(0, 0) = 1.0;
    net::sgd_step(n, tape, 0.1);
    CHECK(n.backbone[0].w(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("adam: first-step magnitude is the learning rate, frozen head untouched") {
    std::mt19937_64 rng(11);
    PolicyNet n = net::make_net(2, {3}, 2, rng);
    double w0 = n.backbone[0].w(0, 0);
    auto tape = net::zero_tape(n);
    tape.backbone[0].w(0, 0) = 1.0;
    auto st = net::make_adam_state(n);
    net::adam_step(n, tape, st, 1e-3);
    CHECK(n.backbone[0].w(0, 0) ==
          doctest::Approx(w0 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-12));

    etf::EtfMatrix m = etf::generate_etf(2, 3, 1.0, 12);
    net::freeze_etf_head(n, m);
    std::string head_before = net::head_bytes(n);
    tape = net::zero_tape(n);
    for (double& g : tape.head.data) g = 5.0;  // must be ignored
    net::adam_step(n, tape, st, 1e-3);
    CHECK(net::head_bytes(n) == head_before);
}

TEST_CASE("adam: three steps against an independent recurrence") {
    std::mt19937_64 rng(12);
    PolicyNet n = net::make_net(2, {3}, 2, rng);
    double w = n.backbone[0].w(0, 0);
    auto st = net::make_adam_state(n);
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Vec grads = {1.0, -2.0, 0.5};

    double m = 0.0, v = 0.0;  // hand recurrence
    for (int t = 1; t <= 3; ++t) {
        double g = grads[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        double mhat = m / (1 - std::pow(b1, t));
        double vhat = v / (1 - std::pow(b2, t));
        w -= lr * mhat / (std::sqrt(vhat) + eps);

        auto tape = net::zero_tape(n);
        tape.backbone[0].w(0, 0) = g;
        net::adam_step(n, tape, st, lr, b1, b2, eps);
    }
    CHECK(n.backbone[0].w(0, 0) == doctest::Approx(w).epsilon(1e-14));
}

TEST_CASE("non-finite gradients abort the step") {
    std::mt19937_64 rng(13);
    PolicyNet n = net::make_net(2, {3}, 2, rng);
    auto tape = net::zero_tape(n);
    tape.backbone[0].w(0, 0) = std::nan("");
    std::string before = net::to_json(n);
    CHECK_THROWS_AS(net::sgd_step(n, tape, 0.1), net::NonFiniteGradientError);
    auto st = net::make_adam_state(n);
    CHECK_THROWS_AS(net::adam_step(n, tape, st, 0.1), net::NonFiniteGradientError);
    CHECK(net::to_json(n) == before);
}

TEST_CASE("gradient clipping rescales only above the threshold") {
    std::mt19937_64 rng(14);
    PolicyNet n = net::make_net(2, {2}, 2, rng);
    auto tape = net::zero_tape(n);
    tape.backbone[0].w(0, 0) = 3.0;
    tape.backbone[0].w(0, 1) = 4.0;  // norm 5
    CHECK(net::tape_grad_norm(tape) == doctest::Approx(5.0));
    net::clip_tape_norm(tape, 10.0);
    CHECK(tape.backbone[0].w(0, 0) == 3.0);
    net::clip_tape_norm(tape, 1.0);
    CHECK(net::tape_grad_norm(tape) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tape.backbone[0].w(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("frozen head is bit-stable across 1000 noisy training steps") {
    std::mt19937_64 rng(15);
    PolicyNet n = net::make_net(8, {16, 8}, 4, rng);
    etf::EtfMatrix m = etf::generate_etf(4, 8, 1.0, 16);
    net::freeze_etf_head(n, m);
    std::string hash_before = sha256_hex(net::head_bytes(n));

    auto st = net::make_adam_state(n);
    std::normal_distribution<double> gauss;
    for (int step = 0; step < 1000; ++step) {
        auto states = random_states(4, 8, rng);
        auto cache = net::forward_batch(n, states);
        std::vector<Vec> dl(4, Vec(4));
        for (auto& row : dl)
            for (double& x : row) x = gauss(rng);
        auto tape = net::backward(n, cache, dl);
        net::adam_step(n, tape, st, 1e-3);
    }
    CHECK(sha256_hex(net::head_bytes(n)) == hash_before);
    CHECK(n.version == 1000);
}

TEST_CASE("training is deterministic in the seed and data order") {
    auto run = [] {
        std::mt19937_64 rng(77);
        PolicyNet n = net::make_net(4, {8, 6}, 3, rng);
        auto st = net::make_adam_state(n);
        std::normal_distribution<double> gauss;
        for (int step = 0; step < 50; ++step) {
            auto states = random_states(3, 4, rng);
            auto cache = net::forward_batch(n, states);
            std::vector<Vec> dl(3, Vec(3));
            for (auto& row : dl)
                for (double& x : row) x = gauss(rng);
            net::adam_step(n, net::backward(n, cache, dl), st, 1e-3);
        }
        return net::to_json(n);
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip preserves every bit that matters") {
    std::mt19937_64 rng(18);
    PolicyNet n = net::make_net(5, {7, 6}, 4, rng);
    etf::EtfMatrix m = etf::generate_etf(4, 6, 2.5, 19);
    net::freeze_etf_head(n, m);
    n.activation_cap = 3.25;

    PolicyNet back = net::from_json(net::to_json(n));
    CHECK(back.frozen == n.frozen);
    CHECK(back.activation_cap == n.activation_cap);
    CHECK(back.head.data == n.head.data);
    REQUIRE(back.backbone.size() == n.backbone.size());
    for (std::size_t l = 0; l < n.backbone.size(); ++l) {
        CHECK(back.backbone[l].w.data == n.backbone[l].w.data);
        CHECK(back.backbone[l].b == n.backbone[l].b);
    }
    REQUIRE(back.etf.has_value());
    CHECK(back.etf->seed == 19);
    CHECK(back.etf->energy == 2.5);

    auto s = random_states(1, 5, rng)[0];
    auto r1 = net::forward(n, s);
    auto r2 = net::forward(back, s);
    CHECK(r1.probs == r2.probs);

    std::string path = "/tmp/acpg_net_roundtrip.json";
    net::save_json(n, path);
    PolicyNet loaded = net::load_json(path);
    CHECK(net::to_json(loaded) == net::to_json(n));
    std::remove(path.c_str());
}

TEST_CASE("param_count matches the written-out architecture") {
    std::mt19937_64 rng(20);
    PolicyNet n = net::make_net(8, {64, 64}, 4, rng);
    // 8*64+64 + 64*64+64 + 4*64
    CHECK(n.param_count() == 576u + 4160u + 256u);
    CHECK(net::head_bytes(n).size() == 4u * 64u * sizeof(double));
}
