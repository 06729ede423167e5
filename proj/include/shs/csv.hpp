#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shs/errors.hpp"

namespace shs::csv {

/// Shortest round-trippable decimal representation of a double.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    // Trim to the shortest form that still round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char probe[64];
        std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
        if (std::strtod(probe, nullptr) == v) return probe;
    }
    return buf;
}

inline std::string format_complex(double re, double im) {
    std::string s = format_double(re);
    s += (im < 0 || (im == 0 && std::signbit(im))) ? "-" : "+";
    s += format_double(std::abs(im));
    s += "i";
    return s;
}

inline std::vector<std::string> split_fields(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, int line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw ParseError("expected a number, got '" + s + "'", line_no);
    return v;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw ValidationError("cannot open output file: " + path);
        path_ = path;
    }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    void flush() {
        out_.flush();
        if (!out_) throw Error("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Reads a CSV file, skipping leading '#' comment lines; first data line is the header.
inline Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    Table t;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_fields(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            if (fields.size() != t.header.size())
                throw ParseError("row has " + std::to_string(fields.size()) + " fields, header has " +
                                     std::to_string(t.header.size()),
                                 line_no);
            t.rows.push_back(std::move(fields));
        }
    }
    return t;
}

} // namespace shs::csv
