#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shs/errors.hpp"

namespace shs {

struct Line {
    std::string id;
    int from_bus = 0;
    int to_bus = 0;
    double resistance = 0.0; // per-unit
    double reactance = 0.0;  // per-unit
};

struct Generator {
    std::string id;
    int bus = 0;
    double inertia = 0.0;  // seconds
    double damping = 0.0;  // per-unit
    double capacity = 0.0; // MW
};

struct Pmu {
    std::string id;
    int bus = 0;
    std::string quantity; // "angle" is the only supported quantity
};

struct Load {
    int bus = 0;
    double active_power = 0.0; // MW
};

/// Static description of a grid: buses, branches, machines, sensors.
struct GridNetwork {
    std::vector<int> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;
    std::vector<Pmu> pmus;
    std::vector<Load> loads;
    int slack_bus = 0;

    [[nodiscard]] bool has_bus(int id) const {
        for (int b : buses)
            if (b == id) return true;
        return false;
    }

    [[nodiscard]] const Line* find_line(const std::string& id) const {
        for (const auto& l : lines)
            if (l.id == id) return &l;
        return nullptr;
    }

    /// Generators that contribute dynamic states (everything not on the slack bus).
    [[nodiscard]] std::vector<Generator> dynamic_generators() const {
        std::vector<Generator> out;
        for (const auto& g : generators)
            if (g.bus != slack_bus) out.push_back(g);
        return out;
    }

    [[nodiscard]] std::set<std::string> all_line_ids() const {
        std::set<std::string> out;
        for (const auto& l : lines) out.insert(l.id);
        return out;
    }
};

namespace detail {

inline bool grid_connected(const GridNetwork& grid, const std::set<std::string>& topology,
                           std::vector<int>* unreachable = nullptr) {
    if (grid.buses.empty()) return true;
    std::map<int, std::vector<int>> adj;
    for (const auto& l : grid.lines) {
        if (!topology.count(l.id)) continue;
        adj[l.from_bus].push_back(l.to_bus);
        adj[l.to_bus].push_back(l.from_bus);
    }
    std::set<int> seen;
    std::vector<int> stack{grid.buses.front()};
    seen.insert(grid.buses.front());
    while (!stack.empty()) {
        const int b = stack.back();
        stack.pop_back();
        for (int nb : adj[b])
            if (seen.insert(nb).second) stack.push_back(nb);
    }
    if (unreachable) {
        unreachable->clear();
        for (int b : grid.buses)
            if (!seen.count(b)) unreachable->push_back(b);
    }
    return seen.size() == grid.buses.size();
}

} // namespace detail

/// Checks every structural invariant; throws ValidationError naming the first violation.
inline void validate_grid(const GridNetwork& grid) {
    if (grid.buses.empty()) throw ValidationError("grid has no buses");
    {
        std::set<int> ids(grid.buses.begin(), grid.buses.end());
        if (ids.size() != grid.buses.size()) throw ValidationError("duplicate bus id");
    }
    if (!grid.has_bus(grid.slack_bus)) throw ValidationError("slack bus " + std::to_string(grid.slack_bus) + " is not a declared bus");
    std::set<std::string> line_ids;
    for (const auto& l : grid.lines) {
        if (!line_ids.insert(l.id).second) throw ValidationError("duplicate line id " + l.id);
        if (!grid.has_bus(l.from_bus) || !grid.has_bus(l.to_bus))
            throw ValidationError("line " + l.id + " references an unknown bus");
        if (l.from_bus == l.to_bus) throw ValidationError("line " + l.id + " connects a bus to itself");
        if (l.reactance <= 0) throw ValidationError("line " + l.id + ": reactance must be positive");
        if (l.resistance < 0) throw ValidationError("line " + l.id + ": resistance must be nonnegative");
    }
    std::set<std::string> gen_ids;
    for (const auto& g : grid.generators) {
        if (!gen_ids.insert(g.id).second) throw ValidationError("duplicate generator id " + g.id);
        if (!grid.has_bus(g.bus)) throw ValidationError("generator " + g.id + " references an unknown bus");
        if (g.inertia <= 0) throw ValidationError("generator " + g.id + ": inertia must be positive");
        if (g.damping <= 0) throw ValidationError("generator " + g.id + ": damping must be positive");
    }
    std::set<std::string> pmu_ids;
    for (const auto& p : grid.pmus) {
        if (!pmu_ids.insert(p.id).second) throw ValidationError("duplicate PMU id " + p.id);
        if (!grid.has_bus(p.bus)) throw ValidationError("PMU " + p.id + " references an unknown bus");
        if (p.quantity != "angle") throw ValidationError("PMU " + p.id + ": unsupported quantity '" + p.quantity + "'");
    }
    for (const auto& ld : grid.loads)
        if (!grid.has_bus(ld.bus)) throw ValidationError("load references an unknown bus " + std::to_string(ld.bus));
    std::vector<int> unreachable;
    if (!detail::grid_connected(grid, grid.all_line_ids(), &unreachable)) {
        std::string msg = "grid is not connected with all lines in service; unreachable buses:";
        for (int b : unreachable) msg += " " + std::to_string(b);
        throw ValidationError(msg);
    }
}

/// Parses the structured-text grid format.
///
/// Sections are introduced by `[buses]`, `[lines]`, `[generators]`, `[pmus]`,
/// `[loads]`, `[slack]`; records are whitespace-separated, one per line, and
/// `#` starts a comment. See data/ieee33.grid for a complete example.
inline GridNetwork parse_grid(std::istream& in) {
    GridNetwork grid;
    bool have_slack = false;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        std::istringstream ss(raw);
        std::string tok;
        if (!(ss >> tok)) continue;
        if (tok.front() == '[') {
            if (tok.back() != ']') throw ParseError("malformed section header '" + tok + "'", line_no);
            section = tok.substr(1, tok.size() - 2);
            if (section != "buses" && section != "lines" && section != "generators" && section != "pmus" &&
                section != "loads" && section != "slack")
                throw ParseError("unknown section '" + section + "'", line_no);
            continue;
        }
        if (section.empty()) throw ParseError("record before any section header", line_no);

        auto need = [&](auto& value, const char* field) {
            std::istringstream fs(tok);
            if (!(fs >> value) || !fs.eof()) throw ParseError(std::string("bad ") + field + " '" + tok + "'", line_no);
        };
        auto next = [&](auto& value, const char* field) {
            if (!(ss >> tok)) throw ParseError(std::string("missing ") + field, line_no);
            need(value, field);
        };

        if (section == "buses") {
            int id = 0;
            need(id, "bus id");
            grid.buses.push_back(id);
        } else if (section == "slack") {
            int id = 0;
            need(id, "slack bus id");
            if (have_slack) throw ParseError("more than one slack bus", line_no);
            grid.slack_bus = id;
            have_slack = true;
        } else if (section == "lines") {
            Line l;
            l.id = tok;
            next(l.from_bus, "from bus");
            next(l.to_bus, "to bus");
            next(l.resistance, "resistance");
            next(l.reactance, "reactance");
            grid.lines.push_back(l);
        } else if (section == "generators") {
            Generator g;
            g.id = tok;
            next(g.bus, "bus");
            next(g.inertia, "inertia");
            next(g.damping, "damping");
            next(g.capacity, "capacity");
            grid.generators.push_back(g);
        } else if (section == "pmus") {
            Pmu p;
            p.id = tok;
            next(p.bus, "bus");
            if (!(ss >> p.quantity)) throw ParseError("missing measured quantity", line_no);
            grid.pmus.push_back(p);
        } else if (section == "loads") {
            Load ld;
            need(ld.bus, "bus");
            next(ld.active_power, "active power");
            grid.loads.push_back(ld);
        }
        if (ss >> tok) throw ParseError("trailing field '" + tok + "'", line_no);
    }
    if (!have_slack) throw ValidationError("grid file declares no slack bus");
    return grid;
}

/// Loads and validates a grid file.
inline GridNetwork load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open grid file: " + path);
    GridNetwork grid = parse_grid(in);
    validate_grid(grid);
    return grid;
}

} // namespace shs
