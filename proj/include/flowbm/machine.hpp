#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowbm/common.hpp"
#include "flowbm/layout.hpp"
#include "flowbm/rng.hpp"
#include "flowbm/state.hpp"

namespace flowbm {

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// A connected pair of layers. first == second denotes an intra-layer block
/// (or the single all-to-all block of a fully-observed machine).
struct LayerBlock {
    std::size_t first;
    std::size_t second;
};

/// Edge blocks of a layout, lower layer first: every (k, k+1) pair plus (k, k)
/// for intra-connected layers.
inline std::vector<LayerBlock> layer_blocks(const LayerSpec& layout) {
    std::vector<LayerBlock> blocks;
    for (std::size_t k = 0; k < layout.layers(); ++k) {
        if (layout.has_intra(k)) blocks.push_back({k, k});
        if (k + 1 < layout.layers()) blocks.push_back({k, k + 1});
    }
    return blocks;
}

inline MaskMatrix connectivity_mask(const LayerSpec& layout) {
    const auto n = static_cast<Eigen::Index>(layout.total());
    MaskMatrix mask = MaskMatrix::Zero(n, n);
    for (const auto& [a, b] : layer_blocks(layout)) {
        const auto oa = static_cast<Eigen::Index>(layout.offset(a));
        const auto ob = static_cast<Eigen::Index>(layout.offset(b));
        const auto na = static_cast<Eigen::Index>(layout.sizes[a]);
        const auto nb = static_cast<Eigen::Index>(layout.sizes[b]);
        mask.block(oa, ob, na, nb).setOnes();
        mask.block(ob, oa, nb, na).setOnes();
    }
    mask.diagonal().setZero();
    return mask;
}

/// Binary Boltzmann machine with dense symmetric weights.
///
/// Fields are public so that tests and the checkpoint reader can build arbitrary
/// (including broken) machines; `validate` reports any broken invariant.
struct BoltzmannMachine {
    LayerSpec layout;
    Eigen::MatrixXd weights;
    Eigen::VectorXd biases;
    MaskMatrix mask;

    BoltzmannMachine() = default;
    explicit BoltzmannMachine(LayerSpec spec)
        : layout(std::move(spec)),
          weights(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout.total()),
                                        static_cast<Eigen::Index>(layout.total()))),
          biases(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()))),
          mask(connectivity_mask(layout)) {}

    [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(biases.size()); }
    [[nodiscard]] Eigen::Index offset(std::size_t layer) const {
        return static_cast<Eigen::Index>(layout.offset(layer));
    }
    [[nodiscard]] Eigen::Index width(std::size_t layer) const {
        return static_cast<Eigen::Index>(layout.sizes[layer]);
    }
    /// Weights between two layers: rows index `from`, columns index `to`.
    [[nodiscard]] auto block(std::size_t from, std::size_t to) const {
        return weights.block(offset(from), offset(to), width(from), width(to));
    }
    auto block(std::size_t from, std::size_t to) {
        return weights.block(offset(from), offset(to), width(from), width(to));
    }
    [[nodiscard]] auto layer_biases(std::size_t layer) const {
        return biases.segment(offset(layer), width(layer));
    }

    /// Sets w_ij = w_ji = v; throws if (i, j) is not an allowed edge.
    void set_weight(std::size_t i, std::size_t j, double v) {
        require(i < n() && j < n(), "set_weight: index out of range");
        require(mask(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0,
                "set_weight: (" + std::to_string(i) + "," + std::to_string(j) + ") is not an edge");
        weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
};

/// Energy(s) = -sum_{ij in E} w_ij s_i s_j - sum_i b_i s_i, each edge once.
inline double energy(const BoltzmannMachine& m, const StateVector& s) {
    require(s.size() == m.n(), "energy: state has length " + std::to_string(s.size()) +
                                   ", machine has " + std::to_string(m.n()) + " units");
    std::vector<Eigen::Index> on;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i]) on.push_back(static_cast<Eigen::Index>(i));
    double e = 0.0;
    for (std::size_t a = 0; a < on.size(); ++a) {
        e -= m.biases(on[a]);
        for (std::size_t b = a + 1; b < on.size(); ++b)
            if (m.mask(on[a], on[b])) e -= m.weights(on[a], on[b]);
    }
    return e;
}

/// Fresh machine: unmasked weights i.i.d. uniform on [-init_scale, init_scale]
/// (upper triangle drawn row-major, mirrored), zero biases.
inline BoltzmannMachine new_machine(const LayerSpec& layout, std::uint64_t seed, double init_scale = 0.01) {
    layout.check();
    require(init_scale > 0.0, "new_machine: init_scale must be positive");
    BoltzmannMachine m(layout);
    RngStream rng(seed, 0x1417ULL);
    const auto n = static_cast<Eigen::Index>(m.n());
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            if (m.mask(i, j)) {
                const double w = init_scale * (2.0 * rng.uniform() - 1.0);
                m.weights(i, j) = w;
                m.weights(j, i) = w;
            }
    return m;
}

struct Violation {
    enum class Kind { Asymmetry, NonzeroDiagonal, MaskBreach, MaskMalformed, ShapeMismatch, NonFinite };
    Kind kind;
    std::size_t i;
    std::size_t j;
    std::string describe() const {
        static const char* names[] = {"asymmetry", "nonzero diagonal", "weight outside mask",
                                      "malformed mask", "shape mismatch", "non-finite value"};
        return std::string(names[static_cast<int>(kind)]) + " at (" + std::to_string(i) + "," +
               std::to_string(j) + ")";
    }
};

/// Every invariant violation; empty means the machine is well formed.
inline std::vector<Violation> validate(const BoltzmannMachine& m) {
    std::vector<Violation> out;
    const auto n = static_cast<Eigen::Index>(m.layout.total());
    if (m.weights.rows() != n || m.weights.cols() != n || m.biases.size() != n || m.mask.rows() != n ||
        m.mask.cols() != n) {
        out.push_back({Violation::Kind::ShapeMismatch, static_cast<std::size_t>(m.weights.rows()),
                       static_cast<std::size_t>(m.weights.cols())});
        return out;
    }
    const MaskMatrix expected = connectivity_mask(m.layout);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!std::isfinite(m.biases(i))) out.push_back({Violation::Kind::NonFinite, std::size_t(i), std::size_t(i)});
        if (m.weights(i, i) != 0.0)
            out.push_back({Violation::Kind::NonzeroDiagonal, std::size_t(i), std::size_t(i)});
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto ui = std::size_t(i), uj = std::size_t(j);
            if (m.mask(i, j) != expected(i, j)) out.push_back({Violation::Kind::MaskMalformed, ui, uj});
            if (!std::isfinite(m.weights(i, j))) out.push_back({Violation::Kind::NonFinite, ui, uj});
            if (j <= i) continue;
            if (m.weights(i, j) != m.weights(j, i)) out.push_back({Violation::Kind::Asymmetry, ui, uj});
            if (!m.mask(i, j) && (m.weights(i, j) != 0.0 || m.weights(j, i) != 0.0))
                out.push_back({Violation::Kind::MaskBreach, ui, uj});
        }
    }
    return out;
}

/// Z = W * Y + b for a batch of states (columns of Y), visiting only connected
/// blocks. Equal to the dense product whenever the machine is valid.
inline Eigen::MatrixXd weighted_input(const BoltzmannMachine& m, const Eigen::MatrixXd& y) {
    require(static_cast<std::size_t>(y.rows()) == m.n(), "weighted_input: batch row count mismatch");
    Eigen::MatrixXd z(y.rows(), y.cols());
    z.colwise() = m.biases;
    for (const auto& [a, b] : layer_blocks(m.layout)) {
        const auto ya = y.middleRows(m.offset(a), m.width(a));
        if (a == b) {
            z.middleRows(m.offset(a), m.width(a)).noalias() += m.block(a, a) * ya;
        } else {
            const auto yb = y.middleRows(m.offset(b), m.width(b));
            z.middleRows(m.offset(b), m.width(b)).noalias() += m.block(a, b).transpose() * ya;
            z.middleRows(m.offset(a), m.width(a)).noalias() += m.block(a, b) * yb;
        }
    }
    return z;
}

}  // namespace flowbm
