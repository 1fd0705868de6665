#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "flowbm/common.hpp"
#include "flowbm/machine.hpp"
#include "flowbm/state.hpp"

namespace flowbm {

inline constexpr double kDefaultClampZ = 30.0;

/// Per-unit quantities of the one-hop flow out of a single state y:
/// alpha_j = 1/2 - y_j, z_j = sum_{i != j} w_ij y_i + b_j, delta_j = exp(alpha_j z_j).
struct FlowTerms {
    Eigen::VectorXd alpha;
    Eigen::VectorXd z;
    Eigen::VectorXd delta;
    std::size_t clamped = 0;  ///< entries of z clipped to +-clamp_z before exponentiation
};

/// Batch-mean gradient of the flow objective. Same structural invariants as the
/// machine's weights. Training applies the negative of this.
struct Gradient {
    Eigen::MatrixXd d_weights;
    Eigen::VectorXd d_biases;
    std::size_t clamped = 0;

    Gradient() = default;
    explicit Gradient(std::size_t n)
        : d_weights(Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n))),
          d_biases(Eigen::VectorXd::Zero(Eigen::Index(n))) {}
};

namespace detail {
/// alpha and clamped delta for a batch, given Z; returns the clamp count.
inline std::size_t rates(const Eigen::MatrixXd& y, Eigen::MatrixXd& z, Eigen::MatrixXd& alpha,
                         Eigen::MatrixXd& delta, double clamp_z) {
    std::size_t clamped = 0;
    alpha = 0.5 - y.array();
    delta.resize(z.rows(), z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c)
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            double& v = z(r, c);
            if (v > clamp_z) {
                v = clamp_z;
                ++clamped;
            } else if (v < -clamp_z) {
                v = -clamp_z;
                ++clamped;
            }
            delta(r, c) = std::exp(alpha(r, c) * v);
        }
    return clamped;
}
}  // namespace detail

inline FlowTerms flow_terms(const BoltzmannMachine& m, const StateVector& y, double clamp_z = kDefaultClampZ) {
    require(y.size() == m.n(), "flow_terms: state length does not match machine");
    const Eigen::MatrixXd yr = y.as_real();
    Eigen::MatrixXd z = weighted_input(m, yr), alpha, delta;
    FlowTerms t;
    t.clamped = detail::rates(yr, z, alpha, delta, clamp_z);
    t.alpha = alpha.col(0);
    t.z = z.col(0);
    t.delta = delta.col(0);
    return t;
}

/// Sum over the batch columns of sum_j delta_j (no 1/N, no epsilon).
inline double flow_sum(const BoltzmannMachine& m, const Eigen::MatrixXd& y, double clamp_z = kDefaultClampZ) {
    Eigen::MatrixXd z = weighted_input(m, y), alpha, delta;
    detail::rates(y, z, alpha, delta, clamp_z);
    return delta.sum();
}

/// K(theta) / epsilon = (1/N) sum_k sum_j delta_j^(k).
inline double objective(const BoltzmannMachine& m, const BitMatrix& data, int threads = 1,
                        double clamp_z = kDefaultClampZ) {
    require(data.cols() > 0, "objective: empty data");
    require(static_cast<std::size_t>(data.rows()) == m.n(), "objective: data rows do not match machine");
    constexpr std::size_t chunk = 256;
    const auto count = static_cast<std::size_t>(data.cols());
    std::vector<double> partial((count + chunk - 1) / chunk, 0.0);
    parallel_chunks(count, chunk, threads, [&](std::size_t b, std::size_t e) {
        partial[b / chunk] = flow_sum(m, to_real(data, Eigen::Index(b), Eigen::Index(e)), clamp_z);
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total / static_cast<double>(count);
}

inline double objective(const BoltzmannMachine& m, const std::vector<StateVector>& data) {
    require(!data.empty(), "objective: empty data");
    return objective(m, to_bit_matrix(data));
}

/// Writes the batch-mean gradient into `out` (only connected blocks are touched,
/// so a reused buffer keeps its zero blocks). Returns the batch flow sum.
inline double gradient_into(const BoltzmannMachine& m, const Eigen::MatrixXd& y, Gradient& out,
                            double clamp_z = kDefaultClampZ) {
    require(y.cols() > 0, "gradient: empty batch");
    require(static_cast<std::size_t>(y.rows()) == m.n(), "gradient: batch rows do not match machine");
    const auto n = static_cast<Eigen::Index>(m.n());
    if (out.d_weights.rows() != n || out.d_weights.cols() != n) out = Gradient(m.n());
    Eigen::MatrixXd z = weighted_input(m, y), alpha, delta;
    out.clamped = detail::rates(y, z, alpha, delta, clamp_z);
    const double inv = 1.0 / static_cast<double>(y.cols());
    const Eigen::MatrixXd g = alpha.cwiseProduct(delta);
    out.d_biases = g.rowwise().sum() * inv;
    for (const auto& [a, b] : layer_blocks(m.layout)) {
        const auto ya = y.middleRows(m.offset(a), m.width(a));
        const auto ga = g.middleRows(m.offset(a), m.width(a));
        auto dst = out.d_weights.block(m.offset(a), m.offset(b), m.width(a), m.width(b));
        if (a == b) {
            dst.noalias() = ya * ga.transpose();
            dst += dst.transpose().eval();
            dst *= inv;
            dst.diagonal().setZero();
        } else {
            const auto yb = y.middleRows(m.offset(b), m.width(b));
            const auto gb = g.middleRows(m.offset(b), m.width(b));
            dst.noalias() = ya * gb.transpose();
            dst.noalias() += ga * yb.transpose();
            dst *= inv;
            out.d_weights.block(m.offset(b), m.offset(a), m.width(b), m.width(a)) = dst.transpose();
        }
    }
    return delta.sum();
}

inline Gradient gradient(const BoltzmannMachine& m, const BitMatrix& batch, double clamp_z = kDefaultClampZ) {
    require(batch.cols() > 0, "gradient: empty batch");
    Gradient g(m.n());
    gradient_into(m, to_real(batch), g, clamp_z);
    return g;
}

inline Gradient gradient(const BoltzmannMachine& m, const std::vector<StateVector>& batch) {
    require(!batch.empty(), "gradient: empty batch");
    return gradient(m, to_bit_matrix(batch));
}

/// Rate of the one-hop move out of y that flips bit j, from the energy
/// difference: exp(E(y)/2 - E(x)/2) with x = y xor e_j.
inline double transition_rate(const BoltzmannMachine& m, const StateVector& y, std::size_t j) {
    require(j < y.size(), "transition_rate: bit index out of range");
    StateVector x = y;
    x.flip(j);
    return std::exp(0.5 * energy(m, y) - 0.5 * energy(m, x));
}

/// Exact D_KL(p0 || p_eps) for the one-hop CTMC, by enumeration of all 2^n
/// states. p_eps = exp(eps * Gamma) p0 is computed with uniformization on the
/// sparse generator, so no dense 2^n x 2^n matrix is formed.
inline double brute_force_flow(const BoltzmannMachine& m, const BitMatrix& data, double eps) {
    const std::size_t n = m.n();
    if (n > 20) throw CapabilityError("brute_force_flow: " + std::to_string(n) + " units exceeds the 20-unit limit");
    require(eps >= 0.0, "brute_force_flow: eps must be non-negative");
    require(data.cols() > 0, "brute_force_flow: empty data");
    require(static_cast<std::size_t>(data.rows()) == n, "brute_force_flow: data rows do not match machine");
    if (eps == 0.0) return 0.0;

    const std::size_t states = std::size_t{1} << n;
    // Energies (as exp(-E/2) factors) for every state via flip recurrences.
    std::vector<double> half_energy(states);
    for (std::size_t s = 0; s < states; ++s) {
        StateVector v(n);
        for (std::size_t i = 0; i < n; ++i) v.set(i, (s >> i) & 1U);
        half_energy[s] = 0.5 * energy(m, v);
    }
    std::vector<double> exit(states, 0.0);
    double lambda = 0.0;
    for (std::size_t s = 0; s < states; ++s) {
        for (std::size_t j = 0; j < n; ++j) exit[s] += std::exp(half_energy[s] - half_energy[s ^ (std::size_t{1} << j)]);
        lambda = std::max(lambda, exit[s]);
    }

    std::vector<double> p0(states, 0.0);
    const double w = 1.0 / static_cast<double>(data.cols());
    for (Eigen::Index k = 0; k < data.cols(); ++k) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (data(Eigen::Index(i), k)) s |= std::size_t{1} << i;
        p0[s] += w;
    }

    // exp(Gamma t) = (exp(Gamma t / steps))^steps with lambda * t / steps <= 1.
    const double total = lambda * eps;
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(total)));
    const double mu = total / static_cast<double>(steps);
    std::vector<double> p = p0, term(states), next(states), acc(states);
    // P = I + Gamma / lambda; column y sends Gamma_xy / lambda to each neighbour x.
    const auto apply_p = [&](const std::vector<double>& in, std::vector<double>& outv) {
        for (std::size_t s = 0; s < states; ++s) outv[s] = in[s] * (1.0 - exit[s] / lambda);
        for (std::size_t s = 0; s < states; ++s) {
            if (in[s] == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t x = s ^ (std::size_t{1} << j);
                outv[x] += in[s] * std::exp(half_energy[s] - half_energy[x]) / lambda;
            }
        }
    };
    for (std::size_t step = 0; step < steps; ++step) {
        term = p;
        double weight = std::exp(-mu);
        for (std::size_t s = 0; s < states; ++s) acc[s] = weight * term[s];
        // mu <= 1, so Poisson weights decay at least factorially after k = 1.
        for (int k = 1; k < 200; ++k) {
            weight *= mu / k;
            if (weight < 1e-22) break;
            apply_p(term, next);
            term.swap(next);
            for (std::size_t s = 0; s < states; ++s) acc[s] += weight * term[s];
        }
        p = acc;
    }

    double kl = 0.0;
    for (std::size_t s = 0; s < states; ++s)
        if (p0[s] > 0.0) kl += p0[s] * std::log(p0[s] / p[s]);
    return kl;
}

inline double brute_force_flow(const BoltzmannMachine& m, const std::vector<StateVector>& data, double eps) {
    require(!data.empty(), "brute_force_flow: empty data");
    return brute_force_flow(m, to_bit_matrix(data), eps);
}

}  // namespace flowbm
