#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shs/grid.hpp"
#include "shs/linalg.hpp"

namespace shs {

/// Continuous-time LTI model (A, B, C) for one operating scenario.
///
/// States are interleaved per dynamic generator as (angle, speed); inputs are
/// mechanical-power commands, one per dynamic generator; outputs are PMU bus
/// angles expressed in the reduced generator coordinates.
struct StateSpaceModel {
    Eigen::MatrixXd A; // n x n, 1/seconds
    Eigen::MatrixXd B; // n x p
    Eigen::MatrixXd C; // r x n
    std::vector<std::string> state_labels;
    std::vector<std::string> input_labels;
    std::vector<std::string> output_labels;

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index p() const { return B.cols(); }
    [[nodiscard]] Eigen::Index r() const { return C.rows(); }

    void check_dimensions() const {
        if (A.rows() != A.cols()) throw ValidationError("A must be square");
        if (B.rows() != A.rows()) throw ValidationError("B row count must match state count");
        if (C.cols() != A.rows()) throw ValidationError("C column count must match state count");
    }
};

struct RankReport {
    int rank = 0;
    bool full_rank = false;
};

/// Rank of A. Full rank means the equilibrium equation A x + B u = 0 has a
/// unique solution for any fixed input.
inline RankReport check_feasibility(const StateSpaceModel& model) {
    RankReport report;
    report.rank = linalg::numerical_rank(model.A);
    report.full_rank = report.rank == model.n();
    return report;
}

namespace detail {

struct ReductionPlan {
    std::vector<int> gen_buses;                  // retained, in generator order
    std::vector<int> passive_buses;              // eliminated
    std::map<int, int> gen_index;                // bus -> position among generators
    std::map<int, int> passive_index;            // bus -> position among passive buses
    Eigen::MatrixXd coupling;                    // reduced susceptance Laplacian over generators
    Eigen::MatrixXd interpolation;               // passive-bus angles as combinations of generator angles
};

/// Builds the susceptance Laplacian over the given topology, grounds the slack
/// bus, and eliminates passive buses. Passive buses with no path to a retained
/// bus make the elimination ill-posed and are reported by id.
inline ReductionPlan reduce_network(const GridNetwork& grid, const std::set<std::string>& topology) {
    for (const auto& id : topology)
        if (!grid.find_line(id)) throw ValidationError("topology references unknown line " + id);

    ReductionPlan plan;
    std::set<int> gen_bus_set;
    for (const auto& g : grid.dynamic_generators()) gen_bus_set.insert(g.bus);
    for (const auto& g : grid.dynamic_generators()) {
        if (!plan.gen_index.count(g.bus)) {
            plan.gen_index[g.bus] = static_cast<int>(plan.gen_buses.size());
            plan.gen_buses.push_back(g.bus);
        }
    }
    for (int b : grid.buses) {
        if (b == grid.slack_bus || gen_bus_set.count(b)) continue;
        plan.passive_index[b] = static_cast<int>(plan.passive_buses.size());
        plan.passive_buses.push_back(b);
    }

    const int ng = static_cast<int>(plan.gen_buses.size());
    const int nd = static_cast<int>(plan.passive_buses.size());
    Eigen::MatrixXd l_gg = Eigen::MatrixXd::Zero(ng, ng);
    Eigen::MatrixXd l_gd = Eigen::MatrixXd::Zero(ng, nd);
    Eigen::MatrixXd l_dg = Eigen::MatrixXd::Zero(nd, ng);
    Eigen::MatrixXd l_dd = Eigen::MatrixXd::Zero(nd, nd);

    auto classify = [&](int bus) -> std::pair<char, int> {
        if (bus == grid.slack_bus) return {'s', 0};
        auto g = plan.gen_index.find(bus);
        if (g != plan.gen_index.end()) return {'g', g->second};
        return {'d', plan.passive_index.at(bus)};
    };

    for (const auto& l : grid.lines) {
        if (!topology.count(l.id)) continue;
        const double b = 1.0 / l.reactance;
        const auto [ka, ia] = classify(l.from_bus);
        const auto [kb, ib] = classify(l.to_bus);
        // Diagonal terms; the slack column is grounded (reference angle 0) and dropped.
        if (ka == 'g') l_gg(ia, ia) += b;
        if (ka == 'd') l_dd(ia, ia) += b;
        if (kb == 'g') l_gg(ib, ib) += b;
        if (kb == 'd') l_dd(ib, ib) += b;
        if (ka == 'g' && kb == 'g') { l_gg(ia, ib) -= b; l_gg(ib, ia) -= b; }
        if (ka == 'g' && kb == 'd') { l_gd(ia, ib) -= b; l_dg(ib, ia) -= b; }
        if (ka == 'd' && kb == 'g') { l_gd(ib, ia) -= b; l_dg(ia, ib) -= b; }
        if (ka == 'd' && kb == 'd') { l_dd(ia, ib) -= b; l_dd(ib, ia) -= b; }
    }

    // Every passive bus must reach a retained bus (generator or slack) through
    // in-service lines, otherwise its angle is undefined.
    {
        std::map<int, std::vector<int>> adj;
        for (const auto& l : grid.lines) {
            if (!topology.count(l.id)) continue;
            adj[l.from_bus].push_back(l.to_bus);
            adj[l.to_bus].push_back(l.from_bus);
        }
        std::set<int> seen;
        std::vector<int> stack;
        stack.push_back(grid.slack_bus);
        seen.insert(grid.slack_bus);
        for (int b : plan.gen_buses)
            if (seen.insert(b).second) stack.push_back(b);
        while (!stack.empty()) {
            const int b = stack.back();
            stack.pop_back();
            for (int nb : adj[b])
                if (seen.insert(nb).second) stack.push_back(nb);
        }
        std::vector<int> isolated;
        for (int b : plan.passive_buses)
            if (!seen.count(b)) isolated.push_back(b);
        if (!isolated.empty()) {
            std::string msg = "topology disconnects buses from every generator and the slack:";
            for (int b : isolated) msg += " " + std::to_string(b);
            throw ValidationError(msg);
        }
    }

    if (nd > 0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(l_dd);
        if (!lu.isInvertible()) throw NumericalError("network reduction is singular");
        plan.interpolation = -lu.solve(l_dg);
        plan.coupling = l_gg + l_gd * plan.interpolation;
    } else {
        plan.interpolation = Eigen::MatrixXd::Zero(0, ng);
        plan.coupling = l_gg;
    }
    // The Schur complement of a symmetric matrix is symmetric; enforce exactly.
    plan.coupling = ((plan.coupling + plan.coupling.transpose()) / 2.0).eval();
    return plan;
}

} // namespace detail

/// Builds the small-signal model for the given in-service topology.
///
/// Each dynamic generator contributes a (angle, speed) pair obeying the swing
/// equation; the electrical coupling is the DC-power-flow susceptance
/// Laplacian with the slack bus as reference and all passive buses eliminated.
inline StateSpaceModel build_small_signal_model(const GridNetwork& grid, const std::set<std::string>& topology) {
    const auto gens = grid.dynamic_generators();
    if (gens.empty()) throw ValidationError("grid has no dynamic (non-slack) generators");
    const auto plan = detail::reduce_network(grid, topology);

    const int m = static_cast<int>(gens.size());
    const int n = 2 * m;
    StateSpaceModel model;
    model.A = Eigen::MatrixXd::Zero(n, n);
    model.B = Eigen::MatrixXd::Zero(n, m);
    model.C = Eigen::MatrixXd::Zero(static_cast<int>(grid.pmus.size()), n);

    for (int i = 0; i < m; ++i) {
        const auto& g = gens[static_cast<std::size_t>(i)];
        const int gi = plan.gen_index.at(g.bus);
        model.A(2 * i, 2 * i + 1) = 1.0;
        model.A(2 * i + 1, 2 * i + 1) = -g.damping / g.inertia;
        for (int j = 0; j < m; ++j) {
            const int gj = plan.gen_index.at(gens[static_cast<std::size_t>(j)].bus);
            model.A(2 * i + 1, 2 * j) -= plan.coupling(gi, gj) / g.inertia;
        }
        model.B(2 * i + 1, i) = 1.0 / g.inertia;
        model.state_labels.push_back("delta(" + g.id + ")");
        model.state_labels.push_back("omega(" + g.id + ")");
        model.input_labels.push_back("u(" + g.id + ")");
    }

    for (std::size_t k = 0; k < grid.pmus.size(); ++k) {
        const auto& pmu = grid.pmus[k];
        const int row = static_cast<int>(k);
        if (pmu.bus == grid.slack_bus) {
            // Reference bus: angle is identically zero.
        } else if (plan.gen_index.count(pmu.bus)) {
            // PMU colocated with a generator reads that angle directly.
            for (int j = 0; j < m; ++j)
                if (gens[static_cast<std::size_t>(j)].bus == pmu.bus) model.C(row, 2 * j) = 1.0;
        } else {
            const int d = plan.passive_index.at(pmu.bus);
            for (int j = 0; j < m; ++j) {
                const int gj = plan.gen_index.at(gens[static_cast<std::size_t>(j)].bus);
                model.C(row, 2 * j) = plan.interpolation(d, gj);
            }
        }
        model.output_labels.push_back(pmu.id);
    }
    return model;
}

/// Convenience overload: all lines in service.
inline StateSpaceModel build_small_signal_model(const GridNetwork& grid) {
    return build_small_signal_model(grid, grid.all_line_ids());
}

} // namespace shs
