#ifndef DSGT_TRACE_IO_HPP
#define DSGT_TRACE_IO_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsgt/analysis.hpp"

namespace dsgt {

// %.17g guarantees doubles survive the round trip
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_trace_csv(const RunTrace& trace, const std::string& path,
                            const std::string& config_hash = "") {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
    if (trace.diverged) out << "# diverged_at=" << trace.diverged_at << '\n';
    out << "k,loss,divergence,consensus,cum_regret";
    if (trace.has_accuracy) out << ",accuracy";
    out << '\n';
    for (const auto& r : trace.rows) {
        out << r.k << ',' << fmt17(r.loss) << ',' << fmt17(r.divergence) << ','
            << fmt17(r.consensus) << ',' << fmt17(r.cum_regret);
        if (trace.has_accuracy) out << ',' << fmt17(r.accuracy);
        out << '\n';
    }
}

inline RunTrace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    RunTrace trace;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto pos = line.find("diverged_at=");
            if (pos != std::string::npos) {
                trace.diverged = true;
                trace.diverged_at = std::stoll(line.substr(pos + 12));
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            trace.has_accuracy = line.find("accuracy") != std::string::npos;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        IterationRecord r;
        r.k = std::stoll(cells.at(0));
        r.loss = std::stod(cells.at(1));
        r.divergence = std::stod(cells.at(2));
        r.consensus = std::stod(cells.at(3));
        r.cum_regret = std::stod(cells.at(4));
        if (trace.has_accuracy && cells.size() > 5) r.accuracy = std::stod(cells.at(5));
        trace.rows.push_back(r);
    }
    return trace;
}

}  // namespace dsgt

#endif
