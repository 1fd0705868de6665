#pragma once

// Fixture builders for the tests. Randomness here comes from std::mt19937 so
// fixtures do not depend on the library's own generator.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "flowbm/machine.hpp"
#include "flowbm/mpf.hpp"
#include "flowbm/state.hpp"

namespace fixture {

/// Machine with every allowed weight and bias drawn uniformly from [-scale, scale].
inline flowbm::BoltzmannMachine random_machine(const flowbm::LayerSpec& layout, std::uint32_t seed, double scale,
                                               double bias_scale = -1.0) {
    if (bias_scale < 0.0) bias_scale = scale;
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> w(-scale, scale), b(-bias_scale, bias_scale);
    flowbm::BoltzmannMachine m(layout);
    const auto n = Eigen::Index(m.n());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (m.mask(i, j)) {
                const double v = w(gen);
                m.weights(i, j) = v;
                m.weights(j, i) = v;
            }
    for (Eigen::Index i = 0; i < n; ++i) m.biases(i) = b(gen);
    return m;
}

inline flowbm::BitMatrix random_bits(Eigen::Index rows, Eigen::Index cols, std::uint32_t seed, double p = 0.5) {
    std::mt19937 gen(seed);
    std::bernoulli_distribution d(p);
    flowbm::BitMatrix out(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = d(gen) ? 1 : 0;
    return out;
}

inline flowbm::StateVector random_state(std::size_t n, std::mt19937& gen) {
    std::bernoulli_distribution d(0.5);
    flowbm::StateVector s(n);
    for (std::size_t i = 0; i < n; ++i) s.set(i, d(gen));
    return s;
}

/// Random layered layout: 1-4 layers of width 1-6, random intra flags.
inline flowbm::LayerSpec random_layout(std::mt19937& gen) {
    std::uniform_int_distribution<int> layers(1, 4), width(1, 6), coin(0, 1);
    flowbm::LayerSpec spec;
    const int l = layers(gen);
    for (int k = 0; k < l; ++k) spec.sizes.push_back(std::size_t(width(gen)));
    for (int k = 1; k < l; ++k) spec.intra_layer.push_back(coin(gen) == 1);
    return spec;
}

/// Max over parameters of |analytic - fd| / max(|analytic|, |fd|, 1e-3).
inline double fd_gradient_error(const flowbm::BoltzmannMachine& m0, const flowbm::BitMatrix& batch, double h) {
    const flowbm::Gradient g = flowbm::gradient(m0, batch);
    const auto f = [&](const flowbm::BoltzmannMachine& m) { return flowbm::objective(m, batch); };
    double worst = 0.0;
    const auto consider = [&](double analytic, double fd) {
        worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-3}));
    };
    const auto n = Eigen::Index(m0.n());
    for (Eigen::Index i = 0; i < n; ++i) {
        flowbm::BoltzmannMachine up = m0, dn = m0;
        up.biases(i) += h;
        dn.biases(i) -= h;
        consider(g.d_biases(i), (f(up) - f(dn)) / (2 * h));
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (!m0.mask(i, j)) continue;
            up = m0;
            dn = m0;
            up.weights(i, j) += h;
            up.weights(j, i) += h;
            dn.weights(i, j) -= h;
            dn.weights(j, i) -= h;
            consider(g.d_weights(i, j), (f(up) - f(dn)) / (2 * h));
        }
    }
    return worst;
}

/// Up to `count` distinct states, pairwise at least two flips apart.
inline flowbm::BitMatrix neighbour_disjoint_data(std::size_t n, std::size_t count, std::mt19937& gen) {
    std::vector<std::size_t> chosen;
    std::uniform_int_distribution<std::size_t> pick(0, (std::size_t(1) << n) - 1);
    for (int tries = 0; chosen.size() < count && tries < 10000; ++tries) {
        const std::size_t s = pick(gen);
        bool ok = true;
        for (auto c : chosen) ok = ok && std::popcount(s ^ c) >= 2;
        if (ok) chosen.push_back(s);
    }
    flowbm::BitMatrix data(Eigen::Index(n), Eigen::Index(chosen.size()));
    for (std::size_t k = 0; k < chosen.size(); ++k)
        for (std::size_t i = 0; i < n; ++i) data(Eigen::Index(i), Eigen::Index(k)) = std::uint8_t((chosen[k] >> i) & 1U);
    return data;
}

}  // namespace fixture
