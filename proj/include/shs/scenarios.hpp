#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "shs/csv.hpp"
#include "shs/state_space.hpp"

namespace shs {

/// Contingency taxonomy by the matrix a scenario alters: A, B or C.
/// The declaration order is also the deterministic tie-break order.
enum class ContingencyClass { Normal = 0, Physical = 1, Control = 2, Measurement = 3 };

inline const char* to_string(ContingencyClass c) {
    switch (c) {
        case ContingencyClass::Normal: return "Normal";
        case ContingencyClass::Physical: return "Physical";
        case ContingencyClass::Control: return "Control";
        case ContingencyClass::Measurement: return "Measurement";
    }
    return "?";
}

inline ContingencyClass contingency_class_from_string(const std::string& s) {
    for (auto c : {ContingencyClass::Normal, ContingencyClass::Physical, ContingencyClass::Control,
                   ContingencyClass::Measurement})
        if (s == to_string(c)) return c;
    throw ValidationError("unknown contingency class '" + s + "'");
}

// --- transforms -------------------------------------------------------------

struct Identity {};
struct LineOutage {
    std::string line_id;
};
struct InputScale {
    int input = 0; // column of B, 0-based
    double factor = 1.0;
};
struct InputLoss {
    int input = 0;
};
struct SensorScale {
    int output = 0; // row of C, 0-based
    double factor = 1.0;
};
struct SensorLoss {
    int output = 0;
};

using Transform = std::variant<Identity, LineOutage, InputScale, InputLoss, SensorScale, SensorLoss>;

inline ContingencyClass class_of(const Transform& t) {
    if (std::holds_alternative<Identity>(t)) return ContingencyClass::Normal;
    if (std::holds_alternative<LineOutage>(t)) return ContingencyClass::Physical;
    if (std::holds_alternative<InputScale>(t) || std::holds_alternative<InputLoss>(t)) return ContingencyClass::Control;
    return ContingencyClass::Measurement;
}

/// One catalogued operating scenario: what switched, and into which class it falls.
struct ContingencyScenario {
    int alpha = 0; // scenario id, 1-based; 1 is always normal operation
    ContingencyClass cls = ContingencyClass::Normal;
    std::string description;
    Transform transform;
};

inline ContingencyScenario make_scenario(int alpha, Transform t, std::string description = {}) {
    ContingencyScenario s;
    s.alpha = alpha;
    s.transform = std::move(t);
    s.cls = class_of(s.transform);
    if (alpha < 1) throw ValidationError("scenario id must be >= 1");
    if ((alpha == 1) != (s.cls == ContingencyClass::Normal))
        throw ValidationError("scenario 1 and only scenario 1 must be the identity");
    if (const auto* sc = std::get_if<InputScale>(&s.transform)) {
        if (sc->factor < 0 || sc->factor == 1.0) throw ValidationError("input scale factor must be >= 0 and != 1");
    }
    if (const auto* sc = std::get_if<SensorScale>(&s.transform)) {
        if (sc->factor < 0 || sc->factor == 1.0) throw ValidationError("sensor scale factor must be >= 0 and != 1");
    }
    s.description = std::move(description);
    return s;
}

/// Returns the scenario's model given the nominal model.
///
/// A line outage rebuilds A from the reduced topology while keeping the
/// nominal B and C; signal faults rescale or zero one column of B or one row
/// of C, which reproduces the faulted input/output behavior without touching
/// the signals themselves.
inline StateSpaceModel apply_contingency(const StateSpaceModel& nominal, const GridNetwork& grid,
                                         const ContingencyScenario& s) {
    StateSpaceModel out = nominal;
    if (std::holds_alternative<Identity>(s.transform)) return out;
    if (const auto* lo = std::get_if<LineOutage>(&s.transform)) {
        if (!grid.find_line(lo->line_id)) throw ValidationError("unknown line id " + lo->line_id);
        auto topology = grid.all_line_ids();
        topology.erase(lo->line_id);
        const StateSpaceModel rebuilt = build_small_signal_model(grid, topology);
        out.A = rebuilt.A;
        return out;
    }
    if (const auto* is = std::get_if<InputScale>(&s.transform)) {
        if (is->input < 0 || is->input >= nominal.p()) throw ValidationError("input index out of range");
        out.B.col(is->input) *= is->factor;
        return out;
    }
    if (const auto* il = std::get_if<InputLoss>(&s.transform)) {
        if (il->input < 0 || il->input >= nominal.p()) throw ValidationError("input index out of range");
        out.B.col(il->input).setZero();
        return out;
    }
    if (const auto* ss = std::get_if<SensorScale>(&s.transform)) {
        if (ss->output < 0 || ss->output >= nominal.r()) throw ValidationError("output index out of range");
        out.C.row(ss->output) *= ss->factor;
        return out;
    }
    const auto& sl = std::get<SensorLoss>(s.transform);
    if (sl.output < 0 || sl.output >= nominal.r()) throw ValidationError("output index out of range");
    out.C.row(sl.output).setZero();
    return out;
}

/// Discretizes a continuous fault-parameter range into {low, low+step, ...,
/// high} with 1.0 removed (a unit factor is normal operation, not a fault).
inline std::vector<double> quantize_parameter_range(double low, double high, double step) {
    if (!(low < high)) throw ValidationError("quantization range requires low < high");
    if (!(step > 0)) throw ValidationError("quantization step must be positive");
    std::vector<double> out;
    const int count = static_cast<int>(std::floor((high - low) / step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) {
        const double v = low + step * i;
        if (std::abs(v - 1.0) <= 1e-9) continue;
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("quantization range contains no usable factors");
    return out;
}

// --- catalog ----------------------------------------------------------------

/// Recipe for a scenario catalog. Counts declared here are cross-checked
/// against what construction actually produces.
struct CatalogSpec {
    int max_line_outages = 0;            // first k removable lines, in file order
    std::vector<double> control_factors; // per input; 0.0 means total input loss
    double sensor_low = 0.0;             // quantized sensor scale range; empty when low == high
    double sensor_high = 0.0;
    double sensor_step = 0.0;

    static CatalogSpec ieee33_default() {
        CatalogSpec spec;
        spec.max_line_outages = 28;
        spec.control_factors = {1.25, 1.5, 1.75, 2.0, 0.75, 0.5, 0.25, 0.0};
        spec.sensor_low = 0.2;
        spec.sensor_high = 1.8;
        spec.sensor_step = 0.1;
        return spec;
    }

    static CatalogSpec empty() { return CatalogSpec{}; }
};

/// Immutable scenario catalog: ids are contiguous 1..m, scenario 1 is normal
/// operation, and every scenario's model is materialized up front.
struct Catalog {
    std::vector<ContingencyScenario> scenarios; // index i holds alpha == i+1
    std::vector<StateSpaceModel> models;        // parallel to scenarios

    [[nodiscard]] int size() const { return static_cast<int>(scenarios.size()); }

    [[nodiscard]] const ContingencyScenario& scenario(int alpha) const {
        if (alpha < 1 || alpha > size()) throw ValidationError("scenario id out of range: " + std::to_string(alpha));
        return scenarios[static_cast<std::size_t>(alpha - 1)];
    }

    [[nodiscard]] const StateSpaceModel& model(int alpha) const {
        if (alpha < 1 || alpha > size()) throw ValidationError("scenario id out of range: " + std::to_string(alpha));
        return models[static_cast<std::size_t>(alpha - 1)];
    }

    [[nodiscard]] const StateSpaceModel& nominal() const { return model(1); }

    [[nodiscard]] std::map<ContingencyClass, int> class_counts() const {
        std::map<ContingencyClass, int> counts;
        for (const auto& s : scenarios) counts[s.cls]++;
        return counts;
    }

    [[nodiscard]] std::vector<int> alphas_of(ContingencyClass c) const {
        std::vector<int> out;
        for (const auto& s : scenarios)
            if (s.cls == c) out.push_back(s.alpha);
        return out;
    }
};

namespace detail {

inline std::string format_factor(double f) { return csv::format_double(f); }

} // namespace detail

/// Enumerates the catalog from a spec: normal operation first, then the
/// single-line outages that keep the network connected, then input scalings
/// and losses, then sensor scalings.
inline Catalog build_catalog(const GridNetwork& grid, const StateSpaceModel& nominal, const CatalogSpec& spec) {
    Catalog cat;
    auto push = [&](ContingencyScenario s) {
        cat.models.push_back(apply_contingency(nominal, grid, s));
        cat.scenarios.push_back(std::move(s));
    };

    push(make_scenario(1, Identity{}, "normal operation"));

    int outages = 0;
    for (const auto& line : grid.lines) {
        if (outages >= spec.max_line_outages) break;
        auto reduced = grid.all_line_ids();
        reduced.erase(line.id);
        if (!detail::grid_connected(grid, reduced)) continue; // bridges are excluded by construction
        push(make_scenario(cat.size() + 1, LineOutage{line.id},
                           "line outage " + line.id + " (" + std::to_string(line.from_bus) + "-" +
                               std::to_string(line.to_bus) + ")"));
        ++outages;
    }
    if (outages != spec.max_line_outages)
        throw ValidationError("catalog spec requests " + std::to_string(spec.max_line_outages) +
                              " line outages but only " + std::to_string(outages) + " keep the network connected");

    const auto& inputs = nominal.input_labels;
    for (Eigen::Index i = 0; i < nominal.p(); ++i) {
        for (double f : spec.control_factors) {
            const std::string label = i < static_cast<Eigen::Index>(inputs.size())
                                          ? inputs[static_cast<std::size_t>(i)]
                                          : "u" + std::to_string(i + 1);
            if (f == 0.0)
                push(make_scenario(cat.size() + 1, InputLoss{static_cast<int>(i)}, label + " lost"));
            else
                push(make_scenario(cat.size() + 1, InputScale{static_cast<int>(i), f},
                                   label + " scaled x" + detail::format_factor(f)));
        }
    }

    if (spec.sensor_step > 0) {
        const auto factors = quantize_parameter_range(spec.sensor_low, spec.sensor_high, spec.sensor_step);
        for (Eigen::Index j = 0; j < nominal.r(); ++j) {
            for (double f : factors) {
                const std::string label = j < static_cast<Eigen::Index>(nominal.output_labels.size())
                                              ? nominal.output_labels[static_cast<std::size_t>(j)]
                                              : "y" + std::to_string(j + 1);
                push(make_scenario(cat.size() + 1, SensorScale{static_cast<int>(j), f},
                                   label + " scaled x" + detail::format_factor(f)));
            }
        }
    }

    for (const auto& m : cat.models) {
        if (m.A.rows() != nominal.A.rows() || m.B.cols() != nominal.B.cols() || m.C.rows() != nominal.C.rows())
            throw ValidationError("catalog model dimensions diverge from nominal");
    }
    return cat;
}

// --- controllability / observability ---------------------------------------

inline Eigen::MatrixXd controllability_matrix(const StateSpaceModel& model) {
    const auto n = model.n();
    const auto p = model.p();
    Eigen::MatrixXd ctrb(n, n * p);
    Eigen::MatrixXd block = model.B;
    for (Eigen::Index k = 0; k < n; ++k) {
        ctrb.middleCols(k * p, p) = block;
        block = model.A * block;
    }
    return ctrb;
}

inline Eigen::MatrixXd observability_matrix(const StateSpaceModel& model) {
    const auto n = model.n();
    const auto r = model.r();
    Eigen::MatrixXd obsv(n * r, n);
    Eigen::MatrixXd block = model.C;
    for (Eigen::Index k = 0; k < n; ++k) {
        obsv.middleRows(k * r, r) = block;
        block = block * model.A;
    }
    return obsv;
}

/// Rank of [B, AB, ..., A^{n-1}B] under the documented rank tolerance.
inline int controllability_rank(const StateSpaceModel& model) {
    return linalg::numerical_rank(controllability_matrix(model));
}

/// Rank of the stacked [C; CA; ...; CA^{n-1}].
inline int observability_rank(const StateSpaceModel& model) {
    return linalg::numerical_rank(observability_matrix(model));
}

// --- manifest ---------------------------------------------------------------

inline std::string transform_token(const Transform& t) {
    if (std::holds_alternative<Identity>(t)) return "identity";
    if (const auto* lo = std::get_if<LineOutage>(&t)) return "line_outage:" + lo->line_id;
    if (const auto* is = std::get_if<InputScale>(&t)) return "input_scale:" + std::to_string(is->input + 1);
    if (const auto* il = std::get_if<InputLoss>(&t)) return "input_loss:" + std::to_string(il->input + 1);
    if (const auto* ss = std::get_if<SensorScale>(&t)) return "sensor_scale:" + std::to_string(ss->output + 1);
    return "sensor_loss:" + std::to_string(std::get<SensorLoss>(t).output + 1);
}

inline std::string transform_parameter(const Transform& t) {
    if (const auto* is = std::get_if<InputScale>(&t)) return detail::format_factor(is->factor);
    if (const auto* ss = std::get_if<SensorScale>(&t)) return detail::format_factor(ss->factor);
    if (std::holds_alternative<InputLoss>(t) || std::holds_alternative<SensorLoss>(t)) return "0";
    return "";
}

/// Writes the audit manifest: alpha, class, transform, parameter.
inline void write_catalog_manifest(const Catalog& cat, csv::Writer& out) {
    out.row({"alpha", "class", "transform", "parameter"});
    for (const auto& s : cat.scenarios)
        out.row({std::to_string(s.alpha), to_string(s.cls), transform_token(s.transform),
                 transform_parameter(s.transform)});
}

/// Deterministic fingerprint over scenario definitions and model matrices.
inline std::uint64_t catalog_hash(const Catalog& cat) {
    std::uint64_t h = linalg::kFnvOffset;
    for (const auto& s : cat.scenarios) {
        h = linalg::hash_string(transform_token(s.transform), h);
        h = linalg::hash_string(transform_parameter(s.transform), h);
    }
    for (const auto& m : cat.models) {
        h = linalg::hash_matrix(m.A, h);
        h = linalg::hash_matrix(m.B, h);
        h = linalg::hash_matrix(m.C, h);
    }
    return h;
}

} // namespace shs
