#include <doctest.h>

#include <cstdio>
#include <random>

#include "acpg/etf.hpp"

using namespace acpg;
using etf::EtfMatrix;

TEST_CASE("k=4 d=8: unit norms, pairwise cosines -1/3") {
    EtfMatrix m = etf::generate_etf(4, 8, 1.0, 7);
    for (int i = 0; i < 4; ++i) CHECK(norm(m.column(i)) == doctest::Approx(1.0).epsilon(1e-10));
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            CHECK(cosine(m.column(i), m.column(j)) ==
                  doctest::Approx(-1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("k=2 d=2: antipodal unit vectors") {
    EtfMatrix m = etf::generate_etf(2, 2, 1.0, 3);
    CHECK(cosine(m.column(0), m.column(1)) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(squared_norm(m.column(0)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("k=5 d=4 energy=2: zero column sum and exact Gram by brute force") {
    EtfMatrix m = etf::generate_etf(5, 4, 2.0, 11);
    Vec sum(4, 0.0);
    for (int j = 0; j < 5; ++j) axpy(1.0, m.column(j), sum);
    CHECK(norm(sum) < 1e-10);
    // Independent Gram computation, plain loops.
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double s = 0.0;
            for (int r = 0; r < 4; ++r) s += m.vectors(r, i) * m.vectors(r, j);
            double want = i == j ? 2.0 : -2.0 / 4.0;
            CHECK(s == doctest::Approx(want).epsilon(1e-10));
        }
}

TEST_CASE("gram oracle values") {
    auto check_gram = [](int k, int d, double e, double diag, double off) {
        Mat g = etf::gram(etf::generate_etf(k, d, e, 5));
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                CHECK(g(i, j) == doctest::Approx(i == j ? diag : off).epsilon(1e-10));
    };
    check_gram(3, 3, 1.0, 1.0, -0.5);
    check_gram(2, 2, 1.0, 1.0, -1.0);
    check_gram(4, 4, 3.0, 3.0, -1.0);
}

TEST_CASE("verify_zero_sum: valid frame, perturbed column, random matrix") {
    EtfMatrix m = etf::generate_etf(4, 6, 1.0, 9);
    CHECK(etf::verify_zero_sum(m) < 1e-10);

    EtfMatrix pert = m;
    const double eps = 1e-3;
    pert.vectors(0, 2) += eps;  // +eps * e1 on one column
    CHECK(etf::verify_zero_sum(pert) == doctest::Approx(eps).epsilon(1e-9));

    EtfMatrix rnd = m;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    for (double& x : rnd.vectors.data) x = gauss(rng);
    CHECK(etf::verify_zero_sum(rnd) > 1e-6);
}

TEST_CASE("determinism and seed-independence of the Gram structure") {
    EtfMatrix a = etf::generate_etf(6, 16, 1.5, 100);
    EtfMatrix b = etf::generate_etf(6, 16, 1.5, 100);
    CHECK(a.vectors.data == b.vectors.data);  // bit-identical

    EtfMatrix c = etf::generate_etf(6, 16, 1.5, 101);
    bool differs = a.vectors.data != c.vectors.data;
    CHECK(differs);  // different orientation...
    Mat ga = etf::gram(a), gc = etf::gram(c);
    for (std::size_t i = 0; i < ga.data.size(); ++i)
        CHECK(ga.data[i] == doctest::Approx(gc.data[i]).epsilon(1e-10));  // ...same Gram
}

TEST_CASE("-1/(K-1) is the floor for the max pairwise cosine of any K vectors") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 200; ++trial) {
        int k = 2 + static_cast<int>(rng() % 7);
        int d = k - 1 + static_cast<int>(rng() % 16);
        std::vector<Vec> v(k, Vec(d));
        for (auto& col : v) {
            for (double& x : col) x = gauss(rng);
            scale(col, 1.0 / norm(col));
        }
        double worst = -2.0;
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                worst = std::max(worst, cosine(v[i], v[j]));
        CHECK(worst >= -1.0 / (k - 1) - 1e-9);
    }
}

TEST_CASE("construction errors") {
    CHECK_THROWS_AS(etf::generate_etf(4, 2, 1.0, 1), etf::EtfError);  // d < k-1
    CHECK_THROWS_AS(etf::generate_etf(1, 4, 1.0, 1), etf::EtfError);
    CHECK_THROWS_AS(etf::generate_etf(4, 8, 0.0, 1), etf::EtfError);
    CHECK_THROWS_AS(etf::generate_etf(4, 8, -1.0, 1), etf::EtfError);
}

TEST_CASE("minimal dimension d = k-1 works") {
    for (int k : {2, 3, 4, 8, 18}) {
        EtfMatrix m = etf::generate_etf(k, k - 1, 1.0, 42 + k);
        CHECK(etf::gram_residual(m) < 1e-10);
        CHECK(etf::verify_zero_sum(m) < 1e-10);
    }
}

TEST_CASE("json round-trip is bit-exact and preserves invariants") {
    EtfMatrix m = etf::generate_etf(5, 13, 0.37, 991);
    EtfMatrix back = etf::from_json(etf::to_json(m));
    CHECK(back.k == m.k);
    CHECK(back.d == m.d);
    CHECK(back.energy == m.energy);
    CHECK(back.seed == m.seed);
    CHECK(back.vectors.data == m.vectors.data);
    etf::check_invariants(back);

    std::string path = "/tmp/acpg_etf_roundtrip.json";
    etf::save_json(m, path);
    EtfMatrix loaded = etf::load_json(path);
    CHECK(loaded.vectors.data == m.vectors.data);
    std::remove(path.c_str());
}

TEST_CASE("check_invariants rejects a corrupted frame") {
    EtfMatrix m = etf::generate_etf(3, 5, 1.0, 55);
    m.vectors(1, 1) += 1e-6;
    CHECK_THROWS_AS(etf::check_invariants(m), etf::EtfError);
}
