#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "flowbm/common.hpp"

namespace flowbm {

/// dt > 0: pre-synaptic spike precedes the post-synaptic one.
struct StdpPoint {
    double dt;
    double dw;
    friend bool operator==(const StdpPoint&, const StdpPoint&) = default;
};

/// Local update for synapse i -> j when post-synaptic unit j transitions:
/// -y_pre * alpha_post * delta_post, alpha_post = 1/2 - (post state after the flip).
inline double stdp_update(int y_pre, double alpha_post, double delta_post) {
    require(y_pre == 0 || y_pre == 1, "stdp_update: y_pre must be 0 or 1");
    require(alpha_post == 0.5 || alpha_post == -0.5, "stdp_update: alpha_post must be +-1/2");
    require(delta_post > 0.0, "stdp_update: delta_post must be positive");
    return -double(y_pre) * alpha_post * delta_post;
}

/// Expected weight change at spike interval |dt|: (1/eps) exp(-delta_pre eps)
/// when pre leads, -delta_post exp(-delta_post eps) when post leads.
inline double stdp_expected(double delta_pre, double delta_post, double dt) {
    require(delta_pre > 0.0 && delta_post > 0.0, "stdp: rates must be positive");
    require(dt != 0.0, "stdp: the curve is singular at dt = 0");
    const double eps = std::abs(dt);
    return dt > 0.0 ? std::exp(-delta_pre * eps) / eps : -delta_post * std::exp(-delta_post * eps);
}

inline std::vector<StdpPoint> stdp_curve(double delta_pre, double delta_post, const std::vector<double>& dts) {
    std::vector<StdpPoint> out;
    out.reserve(dts.size());
    for (double dt : dts) out.push_back({dt, stdp_expected(delta_pre, delta_post, dt)});
    return out;
}

/// `points` values evenly spaced over [dt_min, dt_max] with zero excluded: half
/// the points on each side when the range straddles zero.
inline std::vector<double> stdp_sweep(double dt_min, double dt_max, int points) {
    require(points >= 1, "stdp sweep: need at least one point");
    require(dt_min < dt_max, "stdp sweep: dt_min must be below dt_max");
    std::vector<double> dts;
    dts.reserve(std::size_t(points));
    if (dt_min < 0.0 && dt_max > 0.0) {
        const int neg = points / 2, pos = points - neg;
        for (int k = 0; k < neg; ++k) dts.push_back(dt_min * double(neg - k) / double(neg));
        for (int k = 1; k <= pos; ++k) dts.push_back(dt_max * double(k) / double(pos));
    } else {
        for (int k = 0; k < points; ++k)
            dts.push_back(points == 1 ? dt_min : dt_min + (dt_max - dt_min) * double(k) / double(points - 1));
        for (double dt : dts) require(dt != 0.0, "stdp sweep: range includes dt = 0 as a sample point");
    }
    return dts;
}

inline void write_stdp_csv(std::ostream& os, const std::vector<StdpPoint>& points) {
    os << "dt,dw\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : points) os << p.dt << ',' << p.dw << '\n';
}

inline void emit_stdp_csv(const std::vector<StdpPoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_stdp_csv(out, points);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<StdpPoint> read_stdp_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "dt,dw") throw InputError("stdp csv: missing 'dt,dw' header");
    std::vector<StdpPoint> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        require(comma != std::string::npos, "stdp csv: malformed row '" + line + "'");
        out.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
    return out;
}

}  // namespace flowbm
