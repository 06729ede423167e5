#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "shs/simulator.hpp"

namespace shs {

/// Floor added inside the log so all-zero error windows stay finite.
inline constexpr double kFeatureEpsilon = 1e-12;

/// Number of operating states sampled from nominal closed-loop operation to
/// seed training windows. Drawing window initial states from the loop's own
/// stationary behavior keeps training features on the same scale as windows
/// cut from a live run.
inline constexpr int kStatePoolSize = 192;
inline constexpr int kStatePoolWarmup = 8;

/// Aggregated log-error features for one classification window.
struct FeatureVector {
    Eigen::VectorXd E;    // r+n aggregated log errors
    ContingencyClass label = ContingencyClass::Normal;
    int alpha = 0;        // catalog id, or 0 for off-catalog randomized draws
    double noise_db = 0.0;
    std::uint64_t seed = 0;
};

/// Per-channel absolute errors between a measured window and the noiseless
/// nominal response from the same initial state: e(i, l) = |yc(i,l) - nom(i,l)|.
inline Eigen::MatrixXd error_series(const Trajectory& traj, const Trajectory& nominal) {
    if (traj.yc.rows() != nominal.yc.rows() || traj.yc.cols() != nominal.yc.cols())
        throw ValidationError("trajectory and nominal reference have different shapes");
    return (traj.yc - nominal.yc).cwiseAbs();
}

/// E_i = log(sum_l e(i, l) + epsilon), natural log.
inline Eigen::VectorXd aggregate_features(const Eigen::MatrixXd& errors, double epsilon = kFeatureEpsilon) {
    if (!(epsilon > 0)) throw ValidationError("epsilon must be positive");
    return (errors.rowwise().sum().array() + epsilon).log();
}

struct LabeledDataset {
    std::vector<FeatureVector> rows;
    std::vector<ContingencyScenario> drawn_scenarios; // parallel to rows, for audit

    [[nodiscard]] std::map<ContingencyClass, int> class_counts() const {
        std::map<ContingencyClass, int> counts;
        for (const auto& row : rows) counts[row.label]++;
        return counts;
    }
};

namespace detail {

/// Scales one column of B or row of C in place; used for randomized
/// (off-catalog) fault draws where no grid rebuild is involved.
inline StateSpaceModel scaled_model(const StateSpaceModel& nominal, const Transform& t) {
    StateSpaceModel out = nominal;
    if (const auto* is = std::get_if<InputScale>(&t)) out.B.col(is->input) *= is->factor;
    if (const auto* il = std::get_if<InputLoss>(&t)) out.B.col(il->input).setZero();
    if (const auto* ss = std::get_if<SensorScale>(&t)) out.C.row(ss->output) *= ss->factor;
    if (const auto* sl = std::get_if<SensorLoss>(&t)) out.C.row(sl->output).setZero();
    return out;
}

/// Draws a fault factor uniformly from [0, 2], redrawing inside a thin band
/// around 1.0 where the scenario would be indistinguishable from normal.
inline double draw_fault_factor(std::uint64_t key) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        const double f = 2.0 * rng::uniform(rng::combine(key, attempt));
        if (std::abs(f - 1.0) > 1e-3) return f;
    }
}

/// Samples interval-start states from a randomly switched closed-loop run
/// with the probe active during each identification segment, mirroring the
/// conditions under which windows are cut from a live sequence (including
/// operation entered mid-contingency).
inline std::vector<Eigen::VectorXd> operating_state_pool(const std::vector<DiscreteClosedLoop>& dmodels,
                                                         const SimConfig& cfg, double noise_db,
                                                         std::uint64_t seed) {
    const int interval_samples = cfg.samples_per_interval();
    const int ident_samples = cfg.identification_samples();
    const auto& front = dmodels.front();
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(front.p, interval_samples);
    v.leftCols(ident_samples) = make_probe(cfg.probe, cfg.tau0, cfg.t_s, front.p);
    std::vector<Eigen::VectorXd> pool;
    pool.reserve(kStatePoolSize);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(front.A_d.rows());
    for (int k = 0; k < kStatePoolWarmup + kStatePoolSize; ++k) {
        if (k >= kStatePoolWarmup) pool.push_back(z);
        const auto pick = rng::bounded(rng::combine(seed, 0x510, static_cast<std::uint64_t>(k)), dmodels.size());
        simulate_window(dmodels[static_cast<std::size_t>(pick)], z, v, noise_db, seed,
                        static_cast<std::uint64_t>(k), 0.0, &z);
    }
    return pool;
}

} // namespace detail

/// Generates a labeled dataset of per-window features.
///
/// Each row simulates one tau1 window of a randomly drawn scenario from the
/// row's class: a random catalogued line outage for Physical, and a random
/// input/sensor with a factor from [0, 2] for Control/Measurement (factor 0
/// becomes a total loss). Window initial states are sampled from nominal
/// closed-loop operation at the row's noise level, and features are computed
/// against the noiseless normal-operation response from the same state.
/// Noise levels round-robin across rows of each class.
inline LabeledDataset generate_dataset(const Catalog& catalog, const GainSet& gains, const SimConfig& cfg,
                                       int per_class, const std::vector<double>& noise_levels, std::uint64_t seed,
                                       double epsilon = kFeatureEpsilon) {
    if (per_class < 1) throw ValidationError("per_class must be at least 1");
    if (noise_levels.empty()) throw ValidationError("need at least one noise level");
    cfg.validate();

    const auto& nominal = catalog.nominal();
    const auto dmodels = discretize_catalog(catalog, gains, cfg.t_s);
    const auto& nominal_dm = dmodels.front();
    const Eigen::MatrixXd probe = make_probe(cfg.probe, cfg.tau1, cfg.t_s, nominal.p());
    const auto physical_alphas = catalog.alphas_of(ContingencyClass::Physical);
    std::vector<std::vector<Eigen::VectorXd>> pools;
    for (std::size_t lvl = 0; lvl < noise_levels.size(); ++lvl)
        pools.push_back(detail::operating_state_pool(dmodels, cfg, noise_levels[lvl],
                                                     rng::combine(seed, rng::kStreamDataset, 0xD00F, lvl)));

    LabeledDataset data;
    data.rows.reserve(static_cast<std::size_t>(per_class) * 4);
    const ContingencyClass classes[] = {ContingencyClass::Normal, ContingencyClass::Physical,
                                        ContingencyClass::Control, ContingencyClass::Measurement};
    for (const auto cls : classes) {
        for (int i = 0; i < per_class; ++i) {
            const std::uint64_t row_key = rng::combine(seed, rng::kStreamDataset,
                                                       static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(i));
            const std::size_t level_index = static_cast<std::size_t>(i) % noise_levels.size();
            const double noise_db = noise_levels[level_index];

            ContingencyScenario scenario;
            StateSpaceModel model = nominal;
            switch (cls) {
                case ContingencyClass::Normal:
                    scenario = catalog.scenario(1);
                    break;
                case ContingencyClass::Physical: {
                    if (physical_alphas.empty())
                        throw ValidationError("catalog has no physical scenarios to sample");
                    const auto pick = rng::bounded(rng::combine(row_key, 1),
                                                   static_cast<std::uint64_t>(physical_alphas.size()));
                    const int alpha = physical_alphas[static_cast<std::size_t>(pick)];
                    scenario = catalog.scenario(alpha);
                    model = catalog.model(alpha);
                    break;
                }
                case ContingencyClass::Control: {
                    const auto input = static_cast<int>(
                        rng::bounded(rng::combine(row_key, 2), static_cast<std::uint64_t>(nominal.p())));
                    const double f = detail::draw_fault_factor(rng::combine(row_key, 3));
                    scenario = make_scenario(2, InputScale{input, f}, "randomized input fault");
                    scenario.alpha = 0;
                    model = detail::scaled_model(nominal, scenario.transform);
                    break;
                }
                case ContingencyClass::Measurement: {
                    const auto output = static_cast<int>(
                        rng::bounded(rng::combine(row_key, 4), static_cast<std::uint64_t>(nominal.r())));
                    const double f = detail::draw_fault_factor(rng::combine(row_key, 5));
                    scenario = make_scenario(2, SensorScale{output, f}, "randomized sensor fault");
                    scenario.alpha = 0;
                    model = detail::scaled_model(nominal, scenario.transform);
                    break;
                }
            }

            const auto& pool = pools[level_index];
            const Eigen::VectorXd& z0 =
                pool[static_cast<std::size_t>(rng::bounded(rng::combine(row_key, 6), pool.size()))];

            const auto dm = scenario.alpha >= 1
                                ? dmodels[static_cast<std::size_t>(scenario.alpha - 1)]
                                : discretize(assemble_closed_loop(model, gains), cfg.t_s);
            const Trajectory traj = simulate_window(dm, z0, probe, noise_db, row_key);
            const Trajectory ref =
                simulate_window(nominal_dm, z0, probe, -std::numeric_limits<double>::infinity(), row_key);

            FeatureVector row;
            row.E = aggregate_features(error_series(traj, ref), epsilon);
            row.label = cls;
            row.alpha = scenario.alpha;
            row.noise_db = noise_db;
            row.seed = row_key;
            data.rows.push_back(std::move(row));
            data.drawn_scenarios.push_back(std::move(scenario));
        }
    }
    return data;
}

// --- k-nearest-neighbor classifier ------------------------------------------

struct KnnModel {
    int k = 1;
    std::vector<FeatureVector> points;
};

inline KnnModel knn_train(const LabeledDataset& data, int k) {
    if (data.rows.empty()) throw ValidationError("cannot train on an empty dataset");
    if (k < 1 || k > static_cast<int>(data.rows.size()))
        throw ValidationError("k must be between 1 and the number of training points");
    return KnnModel{k, data.rows};
}

/// Majority class among the k nearest training points (Euclidean distance on
/// E). Ties break by smallest distance sum, then lowest class enum value, so
/// classification is deterministic and order-independent.
inline ContingencyClass knn_classify(const KnnModel& model, const Eigen::VectorXd& query) {
    if (model.points.empty()) throw ValidationError("classifier has no training points");
    if (query.size() != model.points.front().E.size())
        throw ValidationError("query dimension does not match training data");

    std::vector<std::pair<double, int>> dist; // (distance, point index)
    dist.reserve(model.points.size());
    for (std::size_t i = 0; i < model.points.size(); ++i)
        dist.emplace_back((model.points[i].E - query).norm(), static_cast<int>(i));
    const auto kth = dist.begin() + model.k;
    std::nth_element(dist.begin(), kth - 1, dist.end());
    std::sort(dist.begin(), kth);

    std::map<ContingencyClass, std::pair<int, double>> votes; // class -> (count, distance sum)
    for (int i = 0; i < model.k; ++i) {
        const auto& point = model.points[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)].second)];
        auto& v = votes[point.label];
        v.first += 1;
        v.second += dist[static_cast<std::size_t>(i)].first;
    }
    ContingencyClass best = ContingencyClass::Normal;
    int best_count = -1;
    double best_sum = 0.0;
    for (const auto& [cls, v] : votes) {
        const bool wins = v.first > best_count || (v.first == best_count && v.second < best_sum) ||
                          (v.first == best_count && v.second == best_sum && static_cast<int>(cls) < static_cast<int>(best));
        if (wins) {
            best = cls;
            best_count = v.first;
            best_sum = v.second;
        }
    }
    return best;
}

struct EvalReport {
    double accuracy = 0.0;
    Eigen::Matrix4i confusion = Eigen::Matrix4i::Zero(); // rows true, columns predicted
};

inline EvalReport evaluate(const KnnModel& model, const LabeledDataset& test) {
    if (test.rows.empty()) throw ValidationError("cannot evaluate on an empty dataset");
    EvalReport report;
    int correct = 0;
    for (const auto& row : test.rows) {
        const auto predicted = knn_classify(model, row.E);
        report.confusion(static_cast<int>(row.label), static_cast<int>(predicted)) += 1;
        if (predicted == row.label) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(test.rows.size());
    return report;
}

/// Stratified split: within each class, a seeded shuffle sends the first
/// (1 - test_fraction) of rows to training.
inline std::pair<LabeledDataset, LabeledDataset> split_stratified(const LabeledDataset& data, double test_fraction,
                                                                  std::uint64_t seed) {
    if (!(test_fraction > 0 && test_fraction < 1)) throw ValidationError("test fraction must be in (0, 1)");
    LabeledDataset train, test;
    std::map<ContingencyClass, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.rows.size(); ++i) by_class[data.rows[i].label].push_back(i);
    for (auto& [cls, indices] : by_class) {
        for (std::size_t i = indices.size(); i > 1; --i) {
            const auto j = rng::bounded(
                rng::combine(seed, rng::kStreamSplit, static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(i)),
                static_cast<std::uint64_t>(i));
            std::swap(indices[i - 1], indices[static_cast<std::size_t>(j)]);
        }
        const auto test_count = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(indices.size())));
        for (std::size_t i = 0; i < indices.size(); ++i) {
            auto& target = i < test_count ? test : train;
            target.rows.push_back(data.rows[indices[i]]);
            if (indices[i] < data.drawn_scenarios.size())
                target.drawn_scenarios.push_back(data.drawn_scenarios[indices[i]]);
        }
    }
    if (train.rows.empty() || test.rows.empty()) throw ValidationError("split produced an empty partition");
    return {std::move(train), std::move(test)};
}

// --- persistence ------------------------------------------------------------

inline void write_dataset_csv(const LabeledDataset& data, csv::Writer& out) {
    if (data.rows.empty()) throw ValidationError("dataset is empty");
    const auto dims = data.rows.front().E.size();
    std::vector<std::string> header;
    for (Eigen::Index i = 0; i < dims; ++i) header.push_back("E_" + std::to_string(i + 1));
    header.insert(header.end(), {"alpha", "class", "noise_db", "seed"});
    out.row(header);
    for (const auto& row : data.rows) {
        std::vector<std::string> fields;
        for (Eigen::Index i = 0; i < dims; ++i) fields.push_back(csv::format_double(row.E(i)));
        fields.push_back(std::to_string(row.alpha));
        fields.emplace_back(to_string(row.label));
        fields.push_back(csv::format_double(row.noise_db));
        fields.push_back(std::to_string(row.seed));
        out.row(fields);
    }
}

inline LabeledDataset read_dataset_csv(const std::string& path) {
    const auto table = csv::read_table(path);
    if (table.header.size() < 5) throw ValidationError("dataset file has too few columns: " + path);
    Eigen::Index dims = 0;
    while (dims < static_cast<Eigen::Index>(table.header.size()) &&
           table.header[static_cast<std::size_t>(dims)] == "E_" + std::to_string(dims + 1))
        ++dims;
    if (dims == 0 || table.header.size() != static_cast<std::size_t>(dims) + 4)
        throw ValidationError("unrecognized dataset header in " + path);
    LabeledDataset data;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& f = table.rows[r];
        FeatureVector row;
        row.E.resize(dims);
        for (Eigen::Index i = 0; i < dims; ++i)
            row.E(i) = csv::parse_double(f[static_cast<std::size_t>(i)], static_cast<int>(r));
        row.alpha = static_cast<int>(csv::parse_double(f[static_cast<std::size_t>(dims)], static_cast<int>(r)));
        row.label = contingency_class_from_string(f[static_cast<std::size_t>(dims) + 1]);
        row.noise_db = csv::parse_double(f[static_cast<std::size_t>(dims) + 2], static_cast<int>(r));
        row.seed = static_cast<std::uint64_t>(
            std::strtoull(f[static_cast<std::size_t>(dims) + 3].c_str(), nullptr, 10));
        data.rows.push_back(std::move(row));
    }
    return data;
}

/// Model file: versioned CSV dump of k plus the stored training points.
inline void write_knn_model(const KnnModel& model, const std::string& path) {
    csv::Writer out(path);
    out.comment("shs-knn-model v1");
    out.row({"k", std::to_string(model.k)});
    LabeledDataset as_dataset;
    as_dataset.rows = model.points;
    write_dataset_csv(as_dataset, out);
    out.flush();
}

inline KnnModel read_knn_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open model file: " + path);
    KnnModel model;
    std::string line;
    int line_no = 0;
    Eigen::Index dims = -1;
    bool have_k = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = csv::split_fields(line);
        if (!have_k) {
            if (f.size() != 2 || f[0] != "k") throw ParseError("not a knn model file (expected 'k,<n>')", line_no);
            model.k = static_cast<int>(csv::parse_double(f[1], line_no));
            have_k = true;
            continue;
        }
        if (dims < 0) {
            Eigen::Index d = 0;
            while (d < static_cast<Eigen::Index>(f.size()) && f[static_cast<std::size_t>(d)] == "E_" + std::to_string(d + 1))
                ++d;
            if (d == 0 || f.size() != static_cast<std::size_t>(d) + 4)
                throw ParseError("unrecognized model point header", line_no);
            dims = d;
            continue;
        }
        if (f.size() != static_cast<std::size_t>(dims) + 4) throw ParseError("model point row has wrong arity", line_no);
        FeatureVector row;
        row.E.resize(dims);
        for (Eigen::Index i = 0; i < dims; ++i) row.E(i) = csv::parse_double(f[static_cast<std::size_t>(i)], line_no);
        row.alpha = static_cast<int>(csv::parse_double(f[static_cast<std::size_t>(dims)], line_no));
        row.label = contingency_class_from_string(f[static_cast<std::size_t>(dims) + 1]);
        row.noise_db = csv::parse_double(f[static_cast<std::size_t>(dims) + 2], line_no);
        model.points.push_back(std::move(row));
    }
    if (model.points.empty() || model.k < 1 || model.k > static_cast<int>(model.points.size()))
        throw ValidationError("model file is inconsistent: " + path);
    return model;
}

} // namespace shs
