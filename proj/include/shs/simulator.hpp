#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "shs/closed_loop.hpp"
#include "shs/rng.hpp"

namespace shs {

/// Probing input applied during the identification segment of each interval.
///
/// The multisine form drives channel c with
///   v_c(t) = amplitude * sum_j sin(2*pi*(f_j + c*channel_offset_hz)*t + phi_j)
/// where phi_j = j * 2.399963. The per-channel frequency offset keeps the
/// channels distinguishable from one another.
struct ProbeSpec {
    enum class Kind { Zero, Multisine };
    Kind kind = Kind::Multisine;
    double amplitude = 0.05;                      // per-unit
    std::vector<double> frequencies{1.3, 2.7, 4.1}; // Hz
    double channel_offset_hz = 0.37;
};

/// Timing, noise and excitation parameters for simulation runs.
///
/// Each operating interval lasts `tau` seconds; its first `tau0` seconds form
/// the identification segment (probe active), and the first `tau1 <= tau0`
/// seconds of that feed classification. noise_db sets the measurement-noise
/// variance sigma^2 = 10^(noise_db/10); -infinity disables noise.
struct SimConfig {
    double t_s = 0.001;
    double tau = 0.5;
    double tau0 = 0.08;
    double tau1 = 0.02;
    double noise_db = -100.0;
    ProbeSpec probe;
    std::uint64_t seed = 1;

    [[nodiscard]] double noise_sigma() const {
        if (std::isinf(noise_db) && noise_db < 0) return 0.0;
        return std::sqrt(std::pow(10.0, noise_db / 10.0));
    }

    [[nodiscard]] int samples_per_interval() const { return sample_count(tau, "tau"); }
    [[nodiscard]] int identification_samples() const { return sample_count(tau0, "tau0"); }
    [[nodiscard]] int classification_samples() const { return sample_count(tau1, "tau1"); }

    void validate() const {
        if (!(t_s > 0)) throw ValidationError("t_s must be positive");
        if (!(t_s <= tau1 && tau1 <= tau0 && tau0 < tau))
            throw ValidationError("config must satisfy 0 < t_s <= tau1 <= tau0 < tau");
        (void)sample_count(tau1, "tau1");
        (void)sample_count(tau0, "tau0");
        (void)sample_count(tau, "tau");
        if (!(probe.amplitude >= 0)) throw ValidationError("probe amplitude must be nonnegative");
        if (probe.kind == ProbeSpec::Kind::Multisine && probe.frequencies.empty())
            throw ValidationError("multisine probe needs at least one frequency");
    }

private:
    [[nodiscard]] int sample_count(double duration, const char* name) const {
        const double ratio = duration / t_s;
        const double rounded = std::round(ratio);
        if (std::abs(ratio - rounded) > 1e-6 || rounded < 1)
            throw ValidationError(std::string(name) + " must be a positive integer multiple of t_s");
        return static_cast<int>(rounded);
    }
};

/// Zero-order-hold discretization of a closed-loop model.
struct DiscreteClosedLoop {
    Eigen::MatrixXd A_d; // 2n x 2n
    Eigen::MatrixXd B_d; // 2n x (p+r)
    Eigen::MatrixXd C;   // (r+n) x 2n, unchanged by sampling
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    Eigen::Index r = 0;
    double t_s = 0.0;
};

/// Exact ZOH discretization via the augmented matrix exponential:
/// exp([[A, B], [0, 0]] * t_s) = [[A_d, B_d], [0, I]].
inline DiscreteClosedLoop discretize(const ClosedLoopModel& cl, double t_s) {
    if (!(t_s > 0)) throw ValidationError("sample period must be positive");
    const Eigen::Index nx = cl.A_cl.rows();
    const Eigen::Index nu = cl.B_cl.cols();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(nx + nu, nx + nu);
    aug.topLeftCorner(nx, nx) = cl.A_cl * t_s;
    aug.topRightCorner(nx, nu) = cl.B_cl * t_s;
    const Eigen::MatrixXd e = aug.exp();
    DiscreteClosedLoop d;
    d.A_d = e.topLeftCorner(nx, nx);
    d.B_d = e.topRightCorner(nx, nu);
    d.C = cl.C_cl;
    d.n = cl.n;
    d.p = cl.p;
    d.r = cl.r;
    d.t_s = t_s;
    return d;
}

/// Samples the probe: one row per input channel, one column per sample.
inline Eigen::MatrixXd make_probe(const ProbeSpec& spec, double duration, double t_s, Eigen::Index channels) {
    if (!(t_s > 0)) throw ValidationError("sample period must be positive");
    const double ratio = duration / t_s;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-6 || rounded < 0)
        throw ValidationError("probe duration must be a nonnegative integer multiple of t_s");
    const auto samples = static_cast<Eigen::Index>(rounded);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(channels, samples);
    if (spec.kind == ProbeSpec::Kind::Zero) return v;
    if (spec.frequencies.empty()) throw ValidationError("multisine probe needs at least one frequency");
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    constexpr double kPhaseStep = 2.399963;
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (Eigen::Index l = 0; l < samples; ++l) {
            const double t = static_cast<double>(l) * t_s;
            double sum = 0.0;
            for (std::size_t j = 0; j < spec.frequencies.size(); ++j) {
                const double f = spec.frequencies[j] + static_cast<double>(c) * spec.channel_offset_hz;
                sum += std::sin(kTwoPi * f * t + kPhaseStep * static_cast<double>(j));
            }
            v(c, l) = spec.amplitude * sum;
        }
    }
    return v;
}

/// Sampled closed-loop output y_c = [y, xhat] over one window.
struct Trajectory {
    std::vector<double> times;
    Eigen::MatrixXd yc; // (r+n) x samples
    int alpha_true = 0;

    [[nodiscard]] Eigen::Index samples() const { return yc.cols(); }

    /// State estimate at the start of the window (the xhat block carries no
    /// additive noise, so this is exact).
    [[nodiscard]] Eigen::VectorXd initial_estimate(Eigen::Index n) const {
        if (yc.cols() == 0 || yc.rows() < n) throw ValidationError("trajectory is empty");
        return yc.col(0).tail(n);
    }
};

/// Measurement-noise draw for one (window, sample, channel) triple.
inline double noise_sample(std::uint64_t seed, std::uint64_t window, std::uint64_t sample, std::uint64_t channel,
                           double sigma) {
    return sigma * rng::gaussian(rng::combine(rng::combine(seed, rng::kStreamNoise), window, sample, channel));
}

/// Simulates one window of the discrete closed loop.
///
/// Per sample l the output y_c(l) = C z(l) + [N_l, 0] is emitted and the state
/// advances as z(l+1) = A_d z(l) + B_d [v_l, N_l]; the same noise draw N_l
/// feeds both. Noise is keyed by (seed, window_index, sample, channel), so
/// results are independent of call order.
inline Trajectory simulate_window(const DiscreteClosedLoop& dmodel, const Eigen::VectorXd& x0,
                                  const Eigen::MatrixXd& v, double noise_db, std::uint64_t seed,
                                  std::uint64_t window_index = 0, double t_start = 0.0,
                                  Eigen::VectorXd* final_state = nullptr) {
    const Eigen::Index nx = dmodel.A_d.rows();
    if (x0.size() != nx) throw ValidationError("initial state has wrong dimension");
    if (v.rows() != dmodel.p) throw ValidationError("probe channel count must match input count");
    const Eigen::Index samples = v.cols();
    const double sigma = std::isinf(noise_db) && noise_db < 0 ? 0.0 : std::sqrt(std::pow(10.0, noise_db / 10.0));

    Trajectory traj;
    traj.times.resize(static_cast<std::size_t>(samples));
    traj.yc.resize(dmodel.r + dmodel.n, samples);
    Eigen::VectorXd z = x0;
    Eigen::VectorXd input(dmodel.p + dmodel.r);
    for (Eigen::Index l = 0; l < samples; ++l) {
        traj.times[static_cast<std::size_t>(l)] = t_start + static_cast<double>(l) * dmodel.t_s;
        Eigen::VectorXd noise = Eigen::VectorXd::Zero(dmodel.r);
        if (sigma > 0)
            for (Eigen::Index c = 0; c < dmodel.r; ++c)
                noise(c) = noise_sample(seed, window_index, static_cast<std::uint64_t>(l),
                                        static_cast<std::uint64_t>(c), sigma);
        traj.yc.col(l) = dmodel.C * z;
        traj.yc.col(l).head(dmodel.r) += noise;
        input.head(dmodel.p) = v.col(l);
        input.tail(dmodel.r) = noise;
        z = dmodel.A_d * z + dmodel.B_d * input;
        if (!z.allFinite()) throw NumericalError("state diverged to a non-finite value during simulation");
    }
    if (final_state) *final_state = z;
    return traj;
}

/// Random scenario schedule: entry k names the scenario active on interval k.
struct SwitchingSequence {
    std::vector<std::pair<int, int>> entries; // (interval index, alpha)
    std::uint64_t seed = 0;
};

/// Draws alpha uniformly from the catalog, i.i.d. per interval.
inline SwitchingSequence generate_switching_sequence(const Catalog& catalog, int length, std::uint64_t seed) {
    if (length < 1) throw ValidationError("sequence length must be positive");
    if (catalog.size() < 1) throw ValidationError("catalog is empty");
    SwitchingSequence seq;
    seq.seed = seed;
    seq.entries.reserve(static_cast<std::size_t>(length));
    for (int k = 0; k < length; ++k) {
        const auto draw = rng::bounded(rng::combine(seed, rng::kStreamSwitching, static_cast<std::uint64_t>(k)),
                                       static_cast<std::uint64_t>(catalog.size()));
        seq.entries.emplace_back(k, static_cast<int>(draw) + 1);
    }
    return seq;
}

/// Discrete closed loops for every catalog scenario under one gain set.
inline std::vector<DiscreteClosedLoop> discretize_catalog(const Catalog& catalog, const GainSet& gains,
                                                          double t_s) {
    std::vector<DiscreteClosedLoop> out;
    out.reserve(static_cast<std::size_t>(catalog.size()));
    for (int alpha = 1; alpha <= catalog.size(); ++alpha)
        out.push_back(discretize(assemble_closed_loop(catalog.model(alpha), gains), t_s));
    return out;
}

/// Runs a switching sequence through the closed loop.
///
/// The state persists across interval boundaries (no reset at a switch). The
/// probe is active only during [k*tau, k*tau + tau0); the recorded per-interval
/// trajectory covers that identification segment, and its first tau1 worth of
/// samples is the classification sub-window.
inline std::vector<Trajectory> run_sequence(const Catalog& catalog, const GainSet& gains,
                                            const SwitchingSequence& seq, const SimConfig& cfg) {
    cfg.validate();
    const auto dmodels = discretize_catalog(catalog, gains, cfg.t_s);
    const int interval_samples = cfg.samples_per_interval();
    const int ident_samples = cfg.identification_samples();
    const Eigen::Index p = dmodels.front().p;
    const Eigen::Index nx = dmodels.front().A_d.rows();

    Eigen::MatrixXd v_interval = Eigen::MatrixXd::Zero(p, interval_samples);
    v_interval.leftCols(ident_samples) = make_probe(cfg.probe, cfg.tau0, cfg.t_s, p);

    std::vector<Trajectory> windows;
    windows.reserve(seq.entries.size());
    Eigen::VectorXd z = Eigen::VectorXd::Zero(nx);
    for (const auto& [k, alpha] : seq.entries) {
        if (alpha < 1 || alpha > catalog.size()) throw ValidationError("sequence names an unknown scenario");
        const auto& dm = dmodels[static_cast<std::size_t>(alpha - 1)];
        Eigen::VectorXd z_end;
        Trajectory full = simulate_window(dm, z, v_interval, cfg.noise_db, cfg.seed,
                                          static_cast<std::uint64_t>(k), static_cast<double>(k) * cfg.tau, &z_end);
        Trajectory window;
        window.alpha_true = alpha;
        window.times.assign(full.times.begin(), full.times.begin() + ident_samples);
        window.yc = full.yc.leftCols(ident_samples);
        windows.push_back(std::move(window));
        z = z_end;
    }
    return windows;
}

/// Trajectory dump: t, y_1..y_r, xhat_1..xhat_n, alpha_true.
inline void write_trajectory_csv(const std::vector<Trajectory>& windows, Eigen::Index r, Eigen::Index n,
                                 csv::Writer& out) {
    std::vector<std::string> header{"t"};
    for (Eigen::Index i = 0; i < r; ++i) header.push_back("y_" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < n; ++i) header.push_back("xhat_" + std::to_string(i + 1));
    header.emplace_back("alpha_true");
    out.row(header);
    for (const auto& w : windows) {
        for (Eigen::Index l = 0; l < w.samples(); ++l) {
            std::vector<std::string> row{csv::format_double(w.times[static_cast<std::size_t>(l)])};
            for (Eigen::Index i = 0; i < r + n; ++i) row.push_back(csv::format_double(w.yc(i, l)));
            row.push_back(std::to_string(w.alpha_true));
            out.row(row);
        }
    }
}

} // namespace shs
