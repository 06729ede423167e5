#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "shs/errors.hpp"

namespace shs::linalg {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;

/// Singular values below kRankTolerance * sigma_max count as zero.
inline constexpr double kRankTolerance = 1e-9;

inline int numerical_rank(const Eigen::MatrixXd& m) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    const double cutoff = kRankTolerance * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) ++rank;
    return rank;
}

inline ComplexVector eigenvalues(const Eigen::MatrixXd& m) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
    ComplexVector out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

/// Deterministic display/export order: ascending real part, then imaginary part.
inline void sort_spectrum(ComplexVector& v) {
    std::sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

/// Minimum-total-cost assignment on a square cost matrix; returns row -> column.
inline std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ValidationError("assignment requires a square cost matrix");
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (match[j] > 0) row_to_col[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return row_to_col;
}

/// Largest per-pair relative gap under the min-cost pairing of two spectra.
/// Gap for (a, b) is |a - b| / max(|a|, |b|, floor); infinite on size mismatch.
inline double spectrum_gap(const ComplexVector& a, const ComplexVector& b, double abs_floor = 1e-8) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(a.size());
    if (n == 0) return 0.0;
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost(i, j) = std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]);
    const auto pairing = min_cost_assignment(cost);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        const Complex& ai = a[static_cast<std::size_t>(i)];
        const Complex& bj = b[static_cast<std::size_t>(pairing[static_cast<std::size_t>(i)])];
        const double scale = std::max({std::abs(ai), std::abs(bj), abs_floor});
        worst = std::max(worst, std::abs(ai - bj) / scale);
    }
    return worst;
}

/// True when the two eigenvalue multisets agree within a per-eigenvalue relative tolerance.
inline bool spectra_match(const ComplexVector& a, const ComplexVector& b, double rel_tol) {
    return spectrum_gap(a, b) <= rel_tol;
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a), used for cache keys and manifest ids.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t hash_matrix(const Eigen::MatrixXd& m, std::uint64_t h = kFnvOffset) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    h = fnv1a(dims, sizeof(dims), h);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double v = m(i, j);
            h = fnv1a(&v, sizeof(v), h);
        }
    return h;
}

inline std::uint64_t hash_string(const std::string& s, std::uint64_t h = kFnvOffset) {
    return fnv1a(s.data(), s.size(), h);
}

} // namespace shs::linalg
