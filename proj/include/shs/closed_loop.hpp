#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "shs/csv.hpp"
#include "shs/rng.hpp"
#include "shs/scenarios.hpp"

namespace shs {

using linalg::Complex;
using linalg::ComplexVector;

/// Achieved spectra must match requested pole sets this tightly (relative).
inline constexpr double kPoleMatchTolerance = 1e-6;

namespace detail {

inline void require_conjugate_closed(const ComplexVector& poles) {
    std::vector<char> used(poles.size(), 0);
    for (std::size_t i = 0; i < poles.size(); ++i) {
        if (used[i] || std::abs(poles[i].imag()) < 1e-12 * (1.0 + std::abs(poles[i]))) continue;
        bool found = false;
        for (std::size_t j = i + 1; j < poles.size(); ++j) {
            if (used[j]) continue;
            if (std::abs(poles[j] - std::conj(poles[i])) <= 1e-9 * (1.0 + std::abs(poles[i]))) {
                used[i] = used[j] = 1;
                found = true;
                break;
            }
        }
        if (!found)
            throw ValidationError("requested pole set is not closed under complex conjugation");
    }
}

struct PoleEntry {
    Complex lambda;
    bool is_pair = false;      // true: realified together with its conjugate
    Eigen::MatrixXcd basis_v;  // n x d null-space directions for the state part
    Eigen::MatrixXcd basis_w;  // q x d null-space directions for the input part
};

} // namespace detail

/// Computes a state-feedback gain F with eig(A + B F) equal to `desired`.
///
/// Uses eigenstructure assignment: for each requested pole the pair (v, w)
/// with (A - lambda I) v + B w = 0 is drawn from the null space of
/// [A - lambda I, B]; conjugate pairs are realified, and K = W V^{-1}. The
/// multi-input freedom in choosing null-space directions is spent on keeping V
/// well conditioned (seeded restarts, best candidate kept). Observer gains
/// come from the dual pair: G = place_poles(A^T, C^T, poles)^T.
inline Eigen::MatrixXd place_poles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                                   const ComplexVector& desired) {
    const Eigen::Index n = A.rows();
    if (n == 0) throw ValidationError("cannot place poles of an empty system");
    if (A.cols() != n) throw ValidationError("A must be square");
    if (B.rows() != n) throw ValidationError("B row count must match A");
    const Eigen::Index q = B.cols();
    if (q < 1) throw ValidationError("B must have at least one column");
    if (static_cast<Eigen::Index>(desired.size()) != n)
        throw ValidationError("need exactly one pole per state");
    detail::require_conjugate_closed(desired);

    {
        Eigen::MatrixXd ctrb(n, n * q);
        Eigen::MatrixXd block = B;
        for (Eigen::Index k = 0; k < n; ++k) {
            ctrb.middleCols(k * q, q) = block;
            block = A * block;
        }
        if (linalg::numerical_rank(ctrb) < n)
            throw ValidationError("pair is not controllable; pole placement is impossible");
    }

    // Keep one representative per conjugate pair, sorted for determinism.
    ComplexVector sorted = desired;
    linalg::sort_spectrum(sorted);
    std::vector<detail::PoleEntry> entries;
    {
        std::vector<char> used(sorted.size(), 0);
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (used[i]) continue;
            detail::PoleEntry e;
            e.lambda = sorted[i];
            if (std::abs(sorted[i].imag()) >= 1e-12 * (1.0 + std::abs(sorted[i]))) {
                e.is_pair = true;
                e.lambda = Complex(sorted[i].real(), std::abs(sorted[i].imag()));
                for (std::size_t j = i + 1; j < sorted.size(); ++j) {
                    if (!used[j] && std::abs(sorted[j] - std::conj(sorted[i])) <=
                                        1e-9 * (1.0 + std::abs(sorted[i]))) {
                        used[j] = 1;
                        break;
                    }
                }
            } else {
                e.lambda = Complex(sorted[i].real(), 0.0);
            }
            used[i] = 1;
            entries.push_back(std::move(e));
        }
    }

    for (auto& e : entries) {
        Eigen::MatrixXcd pencil(n, n + q);
        pencil.leftCols(n) = A.cast<Complex>() - e.lambda * Eigen::MatrixXcd::Identity(n, n);
        pencil.rightCols(q) = B.cast<Complex>();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        Eigen::Index rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > linalg::kRankTolerance * sv(0)) ++rank;
        const Eigen::Index dim = n + q - rank;
        if (dim < 1) throw NumericalError("empty pole-placement null space");
        e.basis_v = svd.matrixV().rightCols(dim).topRows(n);
        e.basis_w = svd.matrixV().rightCols(dim).bottomRows(q);
    }

    const ComplexVector target(desired.begin(), desired.end());
    Eigen::MatrixXd best_gain;
    double best_gap = std::numeric_limits<double>::infinity();
    double best_norm = std::numeric_limits<double>::infinity();
    constexpr int kAttempts = 60;
    // Attempt 0 picks, per pole, the null-space direction with the least
    // input effort (smallest singular direction of the input block); when the
    // requested poles sit near the open-loop spectrum this yields the
    // small-gain solution. Later attempts draw seeded random directions and
    // serve as fallback when the greedy pick assembles an ill-conditioned V.
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        Eigen::MatrixXd v_real(n, n), w_real(q, n);
        Eigen::Index col = 0;
        for (std::size_t idx = 0; idx < entries.size(); ++idx) {
            const auto& e = entries[idx];
            const Eigen::Index dim = e.basis_v.cols();
            Eigen::VectorXcd c(dim);
            if (attempt == 0) {
                Eigen::JacobiSVD<Eigen::MatrixXcd> effort(e.basis_w, Eigen::ComputeFullV);
                c = effort.matrixV().col(effort.matrixV().cols() - 1);
            } else {
                for (Eigen::Index k = 0; k < dim; ++k) {
                    const std::uint64_t key =
                        rng::combine(rng::kStreamPlacement, static_cast<std::uint64_t>(attempt),
                                     static_cast<std::uint64_t>(idx), static_cast<std::uint64_t>(k));
                    const double re = rng::gaussian(key);
                    const double im = e.is_pair ? rng::gaussian(rng::combine(key, 1)) : 0.0;
                    c(k) = Complex(re, im);
                }
            }
            Eigen::VectorXcd v = e.basis_v * c;
            Eigen::VectorXcd w = e.basis_w * c;
            const double scale = v.norm();
            if (scale < 1e-14) continue;
            v /= scale;
            w /= scale;
            if (e.is_pair) {
                v_real.col(col) = v.real();
                v_real.col(col + 1) = v.imag();
                w_real.col(col) = w.real();
                w_real.col(col + 1) = w.imag();
                col += 2;
            } else {
                v_real.col(col) = v.real();
                w_real.col(col) = w.real();
                col += 1;
            }
        }
        if (col != n) continue;
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(v_real.transpose());
        if (!lu.isInvertible()) continue;
        const Eigen::MatrixXd gain = lu.solve(w_real.transpose()).transpose();
        const double gap = linalg::spectrum_gap(linalg::eigenvalues(A + B * gain), target);
        const double norm = gain.norm();
        const bool hit = gap <= 1e-9;
        const bool best_hit = best_gap <= 1e-9;
        // Among attempts that realize the spectrum, prefer the smallest gain.
        const bool better = best_hit ? (hit && norm < best_norm) : (hit || gap < best_gap);
        if (better) {
            best_gap = gap;
            best_gain = gain;
            best_norm = norm;
        }
    }
    if (!(best_gap <= kPoleMatchTolerance))
        throw NumericalError("pole placement missed the requested spectrum (best relative gap " +
                             csv::format_double(best_gap) + ")");
    return best_gain;
}

/// Feedback and observer gains, kept fixed across every operating scenario.
struct GainSet {
    Eigen::MatrixXd K; // p x n state feedback
    Eigen::MatrixXd G; // n x r output injection
    ComplexVector controller_poles;
    ComplexVector observer_poles;
};

/// How much the default feedback design deepens the open-loop decay rates.
inline constexpr double kControllerDampingBoost = 6.0;

/// Default feedback pole set: the model's own modes with their decay rates
/// multiplied by kControllerDampingBoost. A mild pull keeps the gain small,
/// so the loop stays well behaved when a contingency perturbs A; an
/// aggressive relocation of fast swing modes would do the opposite.
inline ComplexVector default_controller_poles(const StateSpaceModel& nominal) {
    ComplexVector open_loop = linalg::eigenvalues(nominal.A);
    linalg::sort_spectrum(open_loop);
    ComplexVector poles;
    poles.reserve(open_loop.size());
    std::size_t i = 0;
    while (i < open_loop.size()) {
        const auto& ev = open_loop[i];
        double re = ev.real() * kControllerDampingBoost;
        if (re >= 0) re = -0.05; // marginal or unstable open-loop mode: nudge left
        const double im = std::abs(ev.imag());
        if (im > 1e-9 * (1.0 + std::abs(ev))) {
            poles.emplace_back(re, im);
            poles.emplace_back(re, -im);
            i += 2; // conjugate partner is adjacent after sorting
        } else {
            poles.emplace_back(re, 0.0);
            i += 1;
        }
    }
    return poles;
}

/// Observer pole set used for the bundled 8-state model.
inline ComplexVector default_observer_poles() {
    return {{-15, 0}, {-14, 0}, {-13, 0}, {-12, 0}, {-11, 0}, {-9, 0}, {-8, 0}, {-7, 0}};
}

/// Designs both gains against the nominal model and verifies the achieved
/// spectra. Requested poles must be strictly stable.
inline GainSet design_gains(const StateSpaceModel& nominal, ComplexVector controller_poles,
                            ComplexVector observer_poles) {
    for (const auto& pole : controller_poles)
        if (pole.real() >= 0) throw ValidationError("controller poles must have negative real part");
    for (const auto& pole : observer_poles)
        if (pole.real() >= 0) throw ValidationError("observer poles must have negative real part");
    GainSet gains;
    gains.K = place_poles(nominal.A, nominal.B, controller_poles);
    gains.G = place_poles(nominal.A.transpose(), nominal.C.transpose(), observer_poles).transpose();
    gains.controller_poles = std::move(controller_poles);
    gains.observer_poles = std::move(observer_poles);
    if (!linalg::spectra_match(linalg::eigenvalues(nominal.A + nominal.B * gains.K), gains.controller_poles,
                               kPoleMatchTolerance))
        throw NumericalError("feedback gain does not realize the requested poles");
    if (!linalg::spectra_match(linalg::eigenvalues(nominal.A + gains.G * nominal.C), gains.observer_poles,
                               kPoleMatchTolerance))
        throw NumericalError("observer gain does not realize the requested poles");
    return gains;
}

inline GainSet design_gains(const StateSpaceModel& nominal) {
    return design_gains(nominal, default_controller_poles(nominal), default_observer_poles());
}

/// Plant plus observer-error dynamics in one block-triangular system.
///
/// State is [x, xtilde]; inputs are [probe v, measurement noise N]; outputs
/// stack the measurements over the state estimate. lambda1/lambda2 are the
/// spectra of the two diagonal blocks (A+BK) and (A+GC).
struct ClosedLoopModel {
    Eigen::MatrixXd A_cl; // 2n x 2n
    Eigen::MatrixXd B_cl; // 2n x (p+r)
    Eigen::MatrixXd C_cl; // (r+n) x 2n
    ComplexVector lambda1;
    ComplexVector lambda2;
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    Eigen::Index r = 0;
};

/// Assembles the closed loop for one scenario using gains designed elsewhere.
/// Gains are inputs on purpose: reusing the nominal (K, G) under every
/// contingency is what makes the eigenvalue signatures observable.
inline ClosedLoopModel assemble_closed_loop(const StateSpaceModel& model, const GainSet& gains) {
    model.check_dimensions();
    const Eigen::Index n = model.n();
    const Eigen::Index p = model.p();
    const Eigen::Index r = model.r();
    if (gains.K.rows() != p || gains.K.cols() != n) throw ValidationError("feedback gain has wrong dimensions");
    if (gains.G.rows() != n || gains.G.cols() != r) throw ValidationError("observer gain has wrong dimensions");

    ClosedLoopModel cl;
    cl.n = n;
    cl.p = p;
    cl.r = r;
    const Eigen::MatrixXd bk = model.B * gains.K;
    cl.A_cl = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    cl.A_cl.topLeftCorner(n, n) = model.A + bk;
    cl.A_cl.topRightCorner(n, n) = -bk;
    cl.A_cl.bottomRightCorner(n, n) = model.A + gains.G * model.C;

    cl.B_cl = Eigen::MatrixXd::Zero(2 * n, p + r);
    cl.B_cl.topLeftCorner(n, p) = model.B;
    cl.B_cl.bottomRightCorner(n, r) = gains.G;

    cl.C_cl = Eigen::MatrixXd::Zero(r + n, 2 * n);
    cl.C_cl.topLeftCorner(r, n) = model.C;
    cl.C_cl.bottomLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    cl.C_cl.bottomRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);

    cl.lambda1 = linalg::eigenvalues(cl.A_cl.topLeftCorner(n, n));
    cl.lambda2 = linalg::eigenvalues(cl.A_cl.bottomRightCorner(n, n));
    return cl;
}

struct EigenSignature {
    bool lambda1_changed = false;
    bool lambda2_changed = false;
};

/// Compares a scenario's block spectra against nominal under min-cost
/// matching with a per-eigenvalue relative tolerance.
inline EigenSignature eigen_signature(const ClosedLoopModel& contingency, const ClosedLoopModel& nominal,
                                      double rel_tol = kPoleMatchTolerance) {
    if (contingency.n != nominal.n) throw ValidationError("closed-loop models have different sizes");
    EigenSignature sig;
    sig.lambda1_changed = !linalg::spectra_match(contingency.lambda1, nominal.lambda1, rel_tol);
    sig.lambda2_changed = !linalg::spectra_match(contingency.lambda2, nominal.lambda2, rel_tol);
    return sig;
}

/// Maps a signature to the class that produces it: feedback-side changes come
/// from B, observer-side changes from C, and changes to both from A.
inline ContingencyClass infer_class_from_signature(const EigenSignature& sig) {
    if (sig.lambda1_changed && sig.lambda2_changed) return ContingencyClass::Physical;
    if (sig.lambda1_changed) return ContingencyClass::Control;
    if (sig.lambda2_changed) return ContingencyClass::Measurement;
    return ContingencyClass::Normal;
}

/// True when every closed-loop eigenvalue has strictly negative real part.
inline bool closed_loop_stable(const ClosedLoopModel& cl) {
    for (const auto& ev : cl.lambda1)
        if (ev.real() >= 0) return false;
    for (const auto& ev : cl.lambda2)
        if (ev.real() >= 0) return false;
    return true;
}

/// Eigenvalue table export: one row per eigenvalue index, one column per
/// scenario, split into lambda1 and lambda2 sections.
inline void write_eigen_table(const std::vector<ClosedLoopModel>& per_scenario, csv::Writer& out) {
    if (per_scenario.empty()) throw ValidationError("no scenarios to export");
    const auto n = per_scenario.front().n;
    std::vector<std::string> header{"section", "index"};
    for (std::size_t a = 1; a <= per_scenario.size(); ++a) header.push_back("alpha_" + std::to_string(a));
    out.row(header);
    for (const char* section : {"lambda1", "lambda2"}) {
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<std::string> row{section, std::to_string(i + 1)};
            for (const auto& cl : per_scenario) {
                ComplexVector spectrum = std::string(section) == "lambda1" ? cl.lambda1 : cl.lambda2;
                linalg::sort_spectrum(spectrum);
                const auto& ev = spectrum[static_cast<std::size_t>(i)];
                row.push_back(csv::format_complex(ev.real(), ev.imag()));
            }
            out.row(row);
        }
    }
}

/// Fingerprint of a gain set, for manifests and cache keys.
inline std::uint64_t gains_hash(const GainSet& gains) {
    std::uint64_t h = linalg::hash_matrix(gains.K);
    h = linalg::hash_matrix(gains.G, h);
    return h;
}

} // namespace shs
