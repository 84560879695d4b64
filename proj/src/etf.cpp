#include "acpg/etf.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace acpg::etf {

namespace {

// Orthonormal basis of the subspace of R^k orthogonal to the all-ones vector,
// returned as a (k-1) x k matrix with orthonormal rows. Row i is the Helmert
// contrast (1,...,1,-(i+1),0,...,0)/sqrt((i+1)(i+2)).
Mat ones_complement_basis(int k) {
    Mat b(k - 1, k, 0.0);
    for (int i = 0; i < k - 1; ++i) {
        double s = 1.0 / std::sqrt(static_cast<double>(i + 1) * (i + 2));
        for (int j = 0; j <= i; ++j) b(i, j) = s;
        b(i, i + 1) = -s * (i + 1);
    }
    return b;
}

// Modified Gram-Schmidt on the columns of a. Returns false when a pivot falls
// below the degeneracy threshold.
bool orthonormalize_columns(Mat& a) {
    constexpr double kPivotTol = 1e-8;
    for (int j = 0; j < a.cols; ++j) {
        Vec v = a.col(j);
        for (int i = 0; i < j; ++i) {
            Vec q = a.col(i);
            axpy(-dot(q, v), q, v);
        }
        double n = norm(v);
        if (n < kPivotTol) return false;
        scale(v, 1.0 / n);
        a.set_col(j, v);
    }
    return true;
}

}  // namespace

EtfMatrix generate_etf(int k, int d, double energy, std::uint64_t seed) {
    if (k < 2) throw EtfError("generate_etf: k must be >= 2");
    if (d < k - 1)
        throw EtfError("generate_etf: dimension d=" + std::to_string(d) +
                       " is below k-1=" + std::to_string(k - 1));
    if (!(energy > 0.0)) throw EtfError("generate_etf: energy must be > 0");

    // Tightest frame T in R^(k-1): columns t_j = sqrt(k/(k-1)) * B e_j where
    // the rows of B span the complement of the ones vector. T^T T then equals
    // (k/(k-1)) (I - 11^T/k), the unit-energy simplex ETF Gram.
    Mat basis = ones_complement_basis(k);
    double c = std::sqrt(static_cast<double>(k) / (k - 1));
    Mat tight(k - 1, k);
    for (int i = 0; i < k - 1; ++i)
        for (int j = 0; j < k; ++j) tight(i, j) = c * basis(i, j);

    // Random orientation: orthonormalized Gaussian d x (k-1). A Gaussian draw
    // is almost surely full rank; the retry bound guards the pathological case.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    constexpr int kMaxRetries = 8;
    Mat q;
    bool ok = false;
    for (int attempt = 0; attempt < kMaxRetries && !ok; ++attempt) {
        q = Mat(d, k - 1);
        for (double& x : q.data) x = gauss(rng);
        ok = orthonormalize_columns(q);
    }
    if (!ok) throw EtfError("generate_etf: orthonormalization kept degenerating");

    EtfMatrix m;
    m.k = k;
    m.d = d;
    m.energy = energy;
    m.seed = seed;
    m.vectors = Mat(d, k);
    double root_e = std::sqrt(energy);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) {
            double s = 0.0;
            for (int r = 0; r < k - 1; ++r) s += q(i, r) * tight(r, j);
            m.vectors(i, j) = root_e * s;
        }
    check_invariants(m);
    return m;
}

Mat gram(const EtfMatrix& m) {
    Mat g(m.k, m.k);
    for (int i = 0; i < m.k; ++i)
        for (int j = 0; j < m.k; ++j) {
            double s = 0.0;
            for (int r = 0; r < m.d; ++r) s += m.vectors(r, i) * m.vectors(r, j);
            g(i, j) = s;
        }
    return g;
}

double verify_zero_sum(const EtfMatrix& m) {
    Vec sum(m.d, 0.0);
    for (int j = 0; j < m.k; ++j) axpy(1.0, m.vectors.col(j), sum);
    return norm(sum);
}

double gram_residual(const EtfMatrix& m) {
    Mat g = gram(m);
    double off = -m.energy / (m.k - 1);
    double worst = 0.0;
    for (int i = 0; i < m.k; ++i)
        for (int j = 0; j < m.k; ++j) {
            double target = (i == j) ? m.energy : off;
            worst = std::max(worst, std::abs(g(i, j) - target));
        }
    return worst;
}

void check_invariants(const EtfMatrix& m, double tol) {
    double g = gram_residual(m);
    if (g > tol)
        throw EtfError("EtfMatrix: Gram residual " + std::to_string(g) +
                       " exceeds tolerance");
    double z = verify_zero_sum(m);
    if (z > tol)
        throw EtfError("EtfMatrix: column sum residual " + std::to_string(z) +
                       " exceeds tolerance");
}

std::string to_json(const EtfMatrix& m) {
    nlohmann::json j;
    j["schema"] = 1;
    j["k"] = m.k;
    j["d"] = m.d;
    j["energy"] = m.energy;
    j["seed"] = m.seed;
    j["columns"] = m.vectors.data;  // row-major d x k
    return j.dump();
}

EtfMatrix from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EtfMatrix m;
    m.k = j.at("k").get<int>();
    m.d = j.at("d").get<int>();
    m.energy = j.at("energy").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    auto cols = j.at("columns").get<Vec>();
    if (static_cast<int>(cols.size()) != m.d * m.k)
        throw EtfError("EtfMatrix json: columns size mismatch");
    m.vectors = Mat(m.d, m.k);
    m.vectors.data = std::move(cols);
    return m;
}

void save_json(const EtfMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw EtfError("cannot open " + path + " for writing");
    out << to_json(m) << "\n";
}

EtfMatrix load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EtfError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace acpg::etf
