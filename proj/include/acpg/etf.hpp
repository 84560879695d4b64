#pragma once

#include <cstdint>
#include <string>

#include "acpg/linalg.hpp"

namespace acpg::etf {

// K unit-frame vectors in d dimensions with the exact simplex-ETF Gram
// structure, scaled so every column has squared norm E_W:
//   <w_i, w_j> = E_W                  if i == j
//   <w_i, w_j> = -E_W / (K - 1)       if i != j
//   sum_j w_j = 0
// Columns of `vectors` are the frame vectors; shape d x k.
struct EtfMatrix {
    Mat vectors;
    int k = 0;
    int d = 0;
    double energy = 1.0;
    std::uint64_t seed = 0;

    Vec column(int j) const { return vectors.col(j); }
};

// Structural tolerance for the invariants above. The construction is a short
// chain of well-conditioned products, so 1e-10 holds in double precision.
inline constexpr double kStructuralTol = 1e-10;

class EtfError : public std::runtime_error {
  public:
    explicit EtfError(const std::string& what) : std::runtime_error(what) {}
};

// Builds a randomly oriented simplex ETF. The orientation comes from a seeded
// Gaussian draw orthonormalized with modified Gram-Schmidt; different seeds
// give differently oriented frames with identical Gram matrices. Requires
// d >= k - 1 and energy > 0.
EtfMatrix generate_etf(int k, int d, double energy, std::uint64_t seed);

// M^T M; diagonal E_W, off-diagonal -E_W/(K-1).
Mat gram(const EtfMatrix& m);

// ||M * 1||_2. A valid frame returns <= 1e-10.
double verify_zero_sum(const EtfMatrix& m);

// Max absolute deviation of the Gram matrix from the ideal ETF structure.
double gram_residual(const EtfMatrix& m);

// Throws EtfError if any structural invariant is violated beyond tol.
void check_invariants(const EtfMatrix& m, double tol = kStructuralTol);

// JSON document {schema, k, d, energy, seed, columns}; `columns` is the d x k
// matrix flattened row-major. Round-trips bit-for-bit.
std::string to_json(const EtfMatrix& m);
EtfMatrix from_json(const std::string& text);

void save_json(const EtfMatrix& m, const std::string& path);
EtfMatrix load_json(const std::string& path);

}  // namespace acpg::etf
