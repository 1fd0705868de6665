#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "flowbm/common.hpp"
#include "flowbm/machine.hpp"
#include "flowbm/mpf.hpp"

namespace flowbm {

enum class Method { Vpf, Cd, Pcd };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Vpf: return "vpf";
        case Method::Cd: return "cd";
        case Method::Pcd: return "pcd";
    }
    return "?";
}
inline Method parse_method(const std::string& s) {
    if (s == "vpf") return Method::Vpf;
    if (s == "cd") return Method::Cd;
    if (s == "pcd") return Method::Pcd;
    throw InputError("unknown training method '" + s + "' (expected vpf, cd or pcd)");
}

/// Hyperparameters. Defaults are the published experimental settings where
/// those exist (Adam defaults, eta = 1e-3, lambda = 1e-4, M = 40, r = 5).
struct TrainConfig {
    double eta = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double lambda = 0.0001;
    int minibatch = 40;
    int epochs = 100;
    std::uint64_t seed = 1;
    int r = 5;
    int intra_sweeps = 1;
    double init_scale = 0.01;
    double clamp_z = kDefaultClampZ;
    Method method = Method::Vpf;
    int cd_k = 1;
    int checkpoint_every = 10;

    void check() const {
        require(eta > 0.0, "config: eta must be positive");
        require(beta1 >= 0.0 && beta1 < 1.0, "config: beta1 must lie in [0,1)");
        require(beta2 >= 0.0 && beta2 < 1.0, "config: beta2 must lie in [0,1)");
        require(adam_eps > 0.0, "config: adam_eps must be positive");
        require(lambda >= 0.0, "config: lambda must be non-negative");
        require(minibatch >= 1, "config: minibatch must be at least 1");
        require(epochs >= 0, "config: epochs must be non-negative");
        require(r >= 1, "config: r must be at least 1");
        require(intra_sweeps >= 0, "config: intra_sweeps must be non-negative");
        require(init_scale > 0.0, "config: init_scale must be positive");
        require(clamp_z > 0.0, "config: clamp_z must be positive");
        require(cd_k >= 1, "config: cd_k must be at least 1");
        require(checkpoint_every >= 0, "config: checkpoint_every must be non-negative");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// key=value lines; reals written with round-trip precision.
inline void write_config(std::ostream& os, const TrainConfig& c) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "eta=" << c.eta << "\nbeta1=" << c.beta1 << "\nbeta2=" << c.beta2 << "\nadam_eps=" << c.adam_eps
       << "\nlambda=" << c.lambda << "\nminibatch=" << c.minibatch << "\nepochs=" << c.epochs
       << "\nseed=" << c.seed << "\nr=" << c.r << "\nintra_sweeps=" << c.intra_sweeps
       << "\ninit_scale=" << c.init_scale << "\nclamp_z=" << c.clamp_z << "\nmethod=" << to_string(c.method)
       << "\ncd_k=" << c.cd_k << "\ncheckpoint_every=" << c.checkpoint_every << "\n";
}

/// Applies one key=value pair; returns false for keys this struct does not own.
inline bool apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
    const auto real = [&] {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        require(pos == value.size(), "config: bad number '" + value + "' for " + key);
        return v;
    };
    const auto integer = [&] {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        require(pos == value.size(), "config: bad integer '" + value + "' for " + key);
        return v;
    };
    try {
        if (key == "eta") c.eta = real();
        else if (key == "beta1") c.beta1 = real();
        else if (key == "beta2") c.beta2 = real();
        else if (key == "adam_eps") c.adam_eps = real();
        else if (key == "lambda") c.lambda = real();
        else if (key == "minibatch") c.minibatch = int(integer());
        else if (key == "epochs") c.epochs = int(integer());
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key == "r") c.r = int(integer());
        else if (key == "intra_sweeps") c.intra_sweeps = int(integer());
        else if (key == "init_scale") c.init_scale = real();
        else if (key == "clamp_z") c.clamp_z = real();
        else if (key == "method") c.method = parse_method(value);
        else if (key == "cd_k") c.cd_k = int(integer());
        else if (key == "checkpoint_every") c.checkpoint_every = int(integer());
        else return false;
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const InputError*>(&e)) throw;
        throw InputError("config: bad value '" + value + "' for " + key);
    }
    return true;
}

/// Reads key=value lines ('#' comments, blank lines allowed) over the defaults.
/// Keys in `passthrough` are skipped instead of rejected.
inline TrainConfig read_config(std::istream& is, const std::vector<std::string>& passthrough = {}) {
    TrainConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!apply_config_entry(c, key, value) &&
            std::find(passthrough.begin(), passthrough.end(), key) == passthrough.end())
            throw InputError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    c.check();
    return c;
}

inline TrainConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path);
    return read_config(in);
}

/// Adam moment accumulators, shaped like the machine's parameters.
struct AdamState {
    Eigen::MatrixXd m1_weights;
    Eigen::VectorXd m1_biases;
    Eigen::MatrixXd m2_weights;
    Eigen::VectorXd m2_biases;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n)
        : m1_weights(Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n))),
          m1_biases(Eigen::VectorXd::Zero(Eigen::Index(n))),
          m2_weights(Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n))),
          m2_biases(Eigen::VectorXd::Zero(Eigen::Index(n))) {}

    [[nodiscard]] std::size_t n() const { return std::size_t(m1_biases.size()); }
};

inline void reset(AdamState& st) {
    st.m1_weights.setZero();
    st.m1_biases.setZero();
    st.m2_weights.setZero();
    st.m2_biases.setZero();
    st.t = 0;
}

namespace detail {
template <class P, class G, class M1, class M2>
void adam_update(P&& param, const G& grad, M1&& m1, M2&& m2, double b1, double b2, double lr, double eps,
                 double corr1, double corr2) {
    m1 = b1 * m1 + (1.0 - b1) * grad;
    m2 = b2 * m2 + (1.0 - b2) * grad.cwiseAbs2();
    param.array() -= lr * (m1.array() / corr1) / ((m2.array() / corr2).sqrt() + eps);
}
}  // namespace detail

/// One Adam step in the descent direction of (objective + lambda * sum w_ij^2).
/// Decay is added to the raw weight gradient; biases are not decayed. Only the
/// connected blocks are updated, so masked entries stay zero; afterwards each
/// block pair is re-symmetrised and intra-layer diagonals are zeroed.
inline void step(BoltzmannMachine& m, const Gradient& g, AdamState& st, const TrainConfig& cfg) {
    const auto n = Eigen::Index(m.n());
    require(g.d_weights.rows() == n && g.d_weights.cols() == n && g.d_biases.size() == n,
            "optimizer step: gradient shape does not match machine");
    if (st.n() == 0 && st.t == 0) st = AdamState(m.n());
    require(st.m1_weights.rows() == n && st.m1_weights.cols() == n && st.m1_biases.size() == n &&
                st.m2_weights.rows() == n && st.m2_biases.size() == n,
            "optimizer step: Adam state shape does not match machine");

    st.t += 1;
    const double corr1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double corr2 = 1.0 - std::pow(cfg.beta2, double(st.t));

    detail::adam_update(m.biases, g.d_biases, st.m1_biases, st.m2_biases, cfg.beta1, cfg.beta2, cfg.eta,
                        cfg.adam_eps, corr1, corr2);

    for (const auto& [a, b] : layer_blocks(m.layout)) {
        const Eigen::Index oa = m.offset(a), ob = m.offset(b), na = m.width(a), nb = m.width(b);
        auto w = m.weights.block(oa, ob, na, nb);
        const Eigen::MatrixXd eff = g.d_weights.block(oa, ob, na, nb) + 2.0 * cfg.lambda * w;
        detail::adam_update(w, eff, st.m1_weights.block(oa, ob, na, nb), st.m2_weights.block(oa, ob, na, nb),
                            cfg.beta1, cfg.beta2, cfg.eta, cfg.adam_eps, corr1, corr2);
        if (a == b) {
            w = (0.5 * (w + w.transpose())).eval();
            w.diagonal().setZero();
        } else {
            m.weights.block(ob, oa, nb, na) = w.transpose();
            st.m1_weights.block(ob, oa, nb, na) = st.m1_weights.block(oa, ob, na, nb).transpose();
            st.m2_weights.block(ob, oa, nb, na) = st.m2_weights.block(oa, ob, na, nb).transpose();
        }
    }
}

}  // namespace flowbm
