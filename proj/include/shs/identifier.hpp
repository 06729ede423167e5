#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "shs/features.hpp"

namespace shs {

/// Precomputed per-scenario expectations for residual matching.
///
/// For every catalog scenario the bank stores the noiseless forced response
/// to the standard probe from the zero state, plus the discrete closed loop
/// itself so a window's carried initial state can be propagated separately.
/// By linearity, expected(alpha, z0) = C_alpha A_alpha^l z0 + forced_alpha(l).
struct ResponseBank {
    std::vector<Trajectory> forced;          // index alpha-1, (r+n) x samples
    std::vector<DiscreteClosedLoop> dmodels; // index alpha-1
    std::vector<ContingencyClass> classes;   // index alpha-1
    ProbeSpec probe;
    double tau0 = 0.0;
    double t_s = 0.0;

    [[nodiscard]] int size() const { return static_cast<int>(forced.size()); }
    [[nodiscard]] Eigen::Index n() const { return dmodels.front().n; }
    [[nodiscard]] Eigen::Index r() const { return dmodels.front().r; }

    [[nodiscard]] std::vector<int> alphas_of(ContingencyClass c) const {
        std::vector<int> out;
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == c) out.push_back(static_cast<int>(i) + 1);
        return out;
    }
};

/// Simulates every scenario noiselessly over tau0 and asserts the responses
/// are pairwise distinct (duplicates would make exact identification
/// impossible even without noise).
inline ResponseBank precompute_bank(const Catalog& catalog, const GainSet& gains, const SimConfig& cfg) {
    cfg.validate();
    ResponseBank bank;
    bank.probe = cfg.probe;
    bank.tau0 = cfg.tau0;
    bank.t_s = cfg.t_s;
    bank.dmodels = discretize_catalog(catalog, gains, cfg.t_s);
    const Eigen::Index nx = bank.dmodels.front().A_d.rows();
    const Eigen::MatrixXd probe = make_probe(cfg.probe, cfg.tau0, cfg.t_s, bank.dmodels.front().p);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nx);
    for (int alpha = 1; alpha <= catalog.size(); ++alpha) {
        Trajectory t = simulate_window(bank.dmodels[static_cast<std::size_t>(alpha - 1)], zero, probe,
                                       -std::numeric_limits<double>::infinity(), 0);
        t.alpha_true = alpha;
        bank.forced.push_back(std::move(t));
        bank.classes.push_back(catalog.scenario(alpha).cls);
    }
    for (std::size_t i = 0; i < bank.forced.size(); ++i)
        for (std::size_t j = i + 1; j < bank.forced.size(); ++j) {
            const double d = (bank.forced[i].yc - bank.forced[j].yc).squaredNorm();
            if (d <= 1e-24)
                throw ValidationError("bank responses for scenarios " + std::to_string(i + 1) + " and " +
                                      std::to_string(j + 1) + " are indistinguishable over tau0");
        }
    return bank;
}

/// Noiseless normal-operation response from the given initial state, used as
/// the reference both for features and for deviation-based matching.
inline Trajectory nominal_reference(const ResponseBank& bank, const Eigen::VectorXd& z0, Eigen::Index samples) {
    const auto& dm = bank.dmodels.front();
    const auto& forced = bank.forced.front();
    if (samples > forced.samples()) throw ValidationError("requested window exceeds bank horizon");
    Trajectory out;
    out.alpha_true = 1;
    out.times.assign(forced.times.begin(), forced.times.begin() + samples);
    out.yc.resize(dm.r + dm.n, samples);
    Eigen::VectorXd z = z0;
    for (Eigen::Index l = 0; l < samples; ++l) {
        out.yc.col(l) = dm.C * z + forced.yc.col(l);
        z = dm.A_d * z;
    }
    return out;
}

/// One identification outcome. `scanned` counts scenarios visited by the
/// residual search; `elapsed` is wall time of the identification call alone.
struct IdentificationResult {
    int alpha_hat = 0;
    ContingencyClass class_hat = ContingencyClass::Normal;
    double residual = 0.0;
    double elapsed_seconds = 0.0;
    int window_index = 0;
    int scanned = 0;
};

namespace detail {

/// Sum of squared differences between the measured window and scenario
/// alpha's expected response from initial state z0. `y_only` restricts the
/// residual to the measured outputs (drops the estimate channels).
inline double scenario_residual(const Trajectory& measured, const ResponseBank& bank, int alpha,
                                const Eigen::VectorXd& z0, bool y_only) {
    const auto& dm = bank.dmodels[static_cast<std::size_t>(alpha - 1)];
    const auto& forced = bank.forced[static_cast<std::size_t>(alpha - 1)];
    const Eigen::Index samples = measured.samples();
    Eigen::VectorXd z = z0;
    double acc = 0.0;
    for (Eigen::Index l = 0; l < samples; ++l) {
        const Eigen::VectorXd expected = dm.C * z + forced.yc.col(l);
        if (y_only)
            acc += (measured.yc.col(l).head(dm.r) - expected.head(dm.r)).squaredNorm();
        else
            acc += (measured.yc.col(l) - expected).squaredNorm();
        z = dm.A_d * z;
    }
    return acc;
}

inline Eigen::VectorXd carried_state(const Trajectory& measured, const ResponseBank& bank) {
    // The estimate block of the first sample is noise-free; a converged
    // estimator makes [xhat, 0] the best available guess of [x, xtilde].
    Eigen::VectorXd z0 = Eigen::VectorXd::Zero(2 * bank.n());
    z0.head(bank.n()) = measured.initial_estimate(bank.n());
    return z0;
}

} // namespace detail

/// Baseline identifier: exhaustive residual argmin over the whole catalog.
/// Ties break toward the lowest scenario id.
inline IdentificationResult identify_shs(const Trajectory& measured, const ResponseBank& bank,
                                         bool y_only = false) {
    if (measured.samples() > bank.forced.front().samples())
        throw ValidationError("measured window is longer than the bank horizon");
    if (measured.yc.rows() != bank.r() + bank.n()) throw ValidationError("measured window has wrong channel count");
    const auto start = std::chrono::steady_clock::now();
    const Eigen::VectorXd z0 = detail::carried_state(measured, bank);
    IdentificationResult result;
    result.residual = std::numeric_limits<double>::infinity();
    for (int alpha = 1; alpha <= bank.size(); ++alpha) {
        const double r = detail::scenario_residual(measured, bank, alpha, z0, y_only);
        ++result.scanned;
        if (r < result.residual) {
            result.residual = r;
            result.alpha_hat = alpha;
        }
    }
    result.class_hat = bank.classes[static_cast<std::size_t>(result.alpha_hat - 1)];
    result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

/// Two-stage identifier: classify the contingency class from the log-error
/// features of the first tau1 sub-window, then run the residual argmin only
/// over that class. A Normal verdict skips the scan entirely.
inline IdentificationResult identify_lshs(const Trajectory& measured, const KnnModel& classifier,
                                          const ResponseBank& bank, const Trajectory& nominal,
                                          int classification_samples, bool y_only = false,
                                          double epsilon = kFeatureEpsilon) {
    if (measured.samples() > bank.forced.front().samples())
        throw ValidationError("measured window is longer than the bank horizon");
    if (classification_samples < 1 || classification_samples > measured.samples())
        throw ValidationError("classification window must fit inside the measured window");
    if (nominal.samples() < classification_samples)
        throw ValidationError("nominal reference is shorter than the classification window");
    const auto start = std::chrono::steady_clock::now();

    IdentificationResult result;
    Trajectory head;
    head.yc = measured.yc.leftCols(classification_samples);
    Trajectory nominal_head;
    nominal_head.yc = nominal.yc.leftCols(classification_samples);
    const Eigen::VectorXd features = aggregate_features(error_series(head, nominal_head), epsilon);
    result.class_hat = knn_classify(classifier, features);

    const Eigen::VectorXd z0 = detail::carried_state(measured, bank);
    if (result.class_hat == ContingencyClass::Normal) {
        result.alpha_hat = 1;
        result.residual = detail::scenario_residual(measured, bank, 1, z0, y_only);
        result.scanned = 0;
    } else {
        result.residual = std::numeric_limits<double>::infinity();
        for (const int alpha : bank.alphas_of(result.class_hat)) {
            const double r = detail::scenario_residual(measured, bank, alpha, z0, y_only);
            ++result.scanned;
            if (r < result.residual) {
                result.residual = r;
                result.alpha_hat = alpha;
            }
        }
    }
    result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

// --- run scoring -------------------------------------------------------------

struct ClassScore {
    int total = 0;
    int exact = 0;
    int class_correct = 0;
};

struct RunMetrics {
    double exact_accuracy = 0.0;
    double class_accuracy = 0.0;
    std::map<ContingencyClass, ClassScore> per_class;
    double mean_elapsed_seconds = 0.0;
    std::vector<double> moving_average_elapsed; // window of 20
    int windows = 0;
};

/// Scores identification results against the true switching sequence.
inline RunMetrics score_run(const std::vector<IdentificationResult>& results, const SwitchingSequence& truth,
                            const Catalog& catalog) {
    if (results.empty()) throw ValidationError("no identification results to score");
    if (results.size() != truth.entries.size())
        throw ValidationError("result count does not match the switching sequence");
    RunMetrics metrics;
    metrics.windows = static_cast<int>(results.size());
    double elapsed_sum = 0.0;
    int exact = 0, class_ok = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const int alpha_true = truth.entries[i].second;
        const auto class_true = catalog.scenario(alpha_true).cls;
        auto& bucket = metrics.per_class[class_true];
        bucket.total += 1;
        if (results[i].alpha_hat == alpha_true) {
            bucket.exact += 1;
            ++exact;
        }
        const auto class_hat = results[i].class_hat;
        if (class_hat == class_true) {
            bucket.class_correct += 1;
            ++class_ok;
        }
        elapsed_sum += results[i].elapsed_seconds;
    }
    metrics.exact_accuracy = static_cast<double>(exact) / static_cast<double>(results.size());
    metrics.class_accuracy = static_cast<double>(class_ok) / static_cast<double>(results.size());
    metrics.mean_elapsed_seconds = elapsed_sum / static_cast<double>(results.size());
    constexpr std::size_t kWindow = 20;
    if (results.size() >= kWindow) {
        double acc = 0.0;
        for (std::size_t i = 0; i < results.size(); ++i) {
            acc += results[i].elapsed_seconds;
            if (i + 1 >= kWindow) {
                if (i + 1 > kWindow) acc -= results[i - kWindow].elapsed_seconds;
                metrics.moving_average_elapsed.push_back(acc / static_cast<double>(kWindow));
            }
        }
    }
    return metrics;
}

/// Results CSV: k, alpha_true, alpha_hat, class_true, class_hat, residual,
/// elapsed_us, method, tau0.
inline void write_results_csv(const std::vector<IdentificationResult>& results, const SwitchingSequence& truth,
                              const Catalog& catalog, const std::string& method, double tau0, csv::Writer& out,
                              bool header = true) {
    if (results.size() != truth.entries.size())
        throw ValidationError("result count does not match the switching sequence");
    if (header)
        out.row({"k", "alpha_true", "alpha_hat", "class_true", "class_hat", "residual", "elapsed_us", "method",
                 "tau0"});
    for (std::size_t i = 0; i < results.size(); ++i) {
        const int alpha_true = truth.entries[i].second;
        out.row({std::to_string(truth.entries[i].first), std::to_string(alpha_true),
                 std::to_string(results[i].alpha_hat), to_string(catalog.scenario(alpha_true).cls),
                 to_string(results[i].class_hat), csv::format_double(results[i].residual),
                 csv::format_double(results[i].elapsed_seconds * 1e6), method, csv::format_double(tau0)});
    }
}

// --- bank cache ---------------------------------------------------------------

inline constexpr std::uint32_t kBankCacheVersion = 1;

struct BankCacheKey {
    std::uint64_t catalog_hash = 0;
    std::uint64_t gains_hash = 0;
    std::uint64_t config_hash = 0;
};

inline std::uint64_t config_hash(const SimConfig& cfg) {
    std::uint64_t h = linalg::kFnvOffset;
    const double vals[] = {cfg.t_s, cfg.tau, cfg.tau0, cfg.tau1, cfg.probe.amplitude, cfg.probe.channel_offset_hz,
                           static_cast<double>(cfg.probe.kind == ProbeSpec::Kind::Zero)};
    h = linalg::fnv1a(vals, sizeof(vals), h);
    for (double f : cfg.probe.frequencies) h = linalg::fnv1a(&f, sizeof(f), h);
    return h;
}

namespace detail {

inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
}

inline Eigen::MatrixXd read_matrix(std::istream& in) {
    std::int64_t dims[2] = {0, 0};
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[0] < 0 || dims[1] < 0 || dims[0] > 1 << 20 || dims[1] > 1 << 20)
        throw ValidationError("corrupt bank cache");
    Eigen::MatrixXd m(dims[0], dims[1]);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            double v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            m(i, j) = v;
        }
    if (!in) throw ValidationError("corrupt bank cache");
    return m;
}

} // namespace detail

/// Saves the bank keyed by (catalog, gains, config) fingerprints.
inline void write_bank_cache(const ResponseBank& bank, const BankCacheKey& key, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open bank cache for writing: " + path);
    out.write("SHSBANK", 7);
    out.write(reinterpret_cast<const char*>(&kBankCacheVersion), sizeof(kBankCacheVersion));
    out.write(reinterpret_cast<const char*>(&key), sizeof(key));
    const std::int64_t m = bank.size();
    out.write(reinterpret_cast<const char*>(&m), sizeof(m));
    const double meta[2] = {bank.tau0, bank.t_s};
    out.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    for (int i = 0; i < m; ++i) {
        const auto& dm = bank.dmodels[static_cast<std::size_t>(i)];
        const std::int32_t cls = static_cast<std::int32_t>(bank.classes[static_cast<std::size_t>(i)]);
        const std::int64_t dims[3] = {dm.n, dm.p, dm.r};
        out.write(reinterpret_cast<const char*>(&cls), sizeof(cls));
        out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
        detail::write_matrix(out, dm.A_d);
        detail::write_matrix(out, dm.B_d);
        detail::write_matrix(out, dm.C);
        detail::write_matrix(out, bank.forced[static_cast<std::size_t>(i)].yc);
    }
    if (!out) throw Error("bank cache write failed: " + path);
}

/// Loads a cached bank; returns false when the file is absent or keyed
/// differently (caller then recomputes).
inline bool read_bank_cache(const BankCacheKey& key, const std::string& path, ResponseBank& bank) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[7] = {};
    in.read(magic, 7);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    BankCacheKey stored{};
    in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!in || std::string(magic, 7) != "SHSBANK" || version != kBankCacheVersion) return false;
    if (stored.catalog_hash != key.catalog_hash || stored.gains_hash != key.gains_hash ||
        stored.config_hash != key.config_hash)
        return false;
    std::int64_t m = 0;
    in.read(reinterpret_cast<char*>(&m), sizeof(m));
    double meta[2] = {0, 0};
    in.read(reinterpret_cast<char*>(meta), sizeof(meta));
    if (!in || m < 1) return false;
    ResponseBank loaded;
    loaded.tau0 = meta[0];
    loaded.t_s = meta[1];
    for (std::int64_t i = 0; i < m; ++i) {
        std::int32_t cls = 0;
        std::int64_t dims[3] = {0, 0, 0};
        in.read(reinterpret_cast<char*>(&cls), sizeof(cls));
        in.read(reinterpret_cast<char*>(dims), sizeof(dims));
        if (!in) return false;
        DiscreteClosedLoop dm;
        dm.n = dims[0];
        dm.p = dims[1];
        dm.r = dims[2];
        dm.t_s = loaded.t_s;
        dm.A_d = detail::read_matrix(in);
        dm.B_d = detail::read_matrix(in);
        dm.C = detail::read_matrix(in);
        Trajectory t;
        t.yc = detail::read_matrix(in);
        t.alpha_true = static_cast<int>(i) + 1;
        t.times.resize(static_cast<std::size_t>(t.yc.cols()));
        for (std::size_t l = 0; l < t.times.size(); ++l) t.times[l] = static_cast<double>(l) * loaded.t_s;
        loaded.classes.push_back(static_cast<ContingencyClass>(cls));
        loaded.dmodels.push_back(std::move(dm));
        loaded.forced.push_back(std::move(t));
    }
    bank = std::move(loaded);
    return true;
}

} // namespace shs
