#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flowbm/common.hpp"
#include "flowbm/machine.hpp"
#include "flowbm/rng.hpp"
#include "flowbm/state.hpp"

namespace flowbm {

/// One state per layer, layer 0 observed.
struct LayerStates {
    std::vector<StateVector> layers;

    static LayerStates zeros(const LayerSpec& layout) {
        LayerStates s;
        for (auto w : layout.sizes) s.layers.emplace_back(w);
        return s;
    }
    /// Concatenation (x, h_1, ..., h_l).
    [[nodiscard]] StateVector joined() const {
        std::vector<std::uint8_t> bits;
        for (const auto& l : layers) bits.insert(bits.end(), l.bits().begin(), l.bits().end());
        return StateVector(bits);
    }
};

/// Stream tags for derived per-item streams.
namespace stream_tag {
inline constexpr std::uint64_t kEStep = 0xE57E9;
inline constexpr std::uint64_t kGenerate = 0x6E4E;
inline constexpr std::uint64_t kReconstruct = 0x4EC0;
inline constexpr std::uint64_t kShuffle = 0x5F1E;
inline constexpr std::uint64_t kCorrupt = 0xC044;
inline constexpr std::uint64_t kChains = 0xC7A1;
}  // namespace stream_tag

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Elementwise logistic function through Eigen's vectorised exp; saturates to
/// exactly 0 or 1 for large |x|.
inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
    return (1.0 + (-x.array()).exp()).inverse().matrix();
}

/// Batched layer states: one width x B real 0/1 matrix per layer, column c of
/// every layer belongs to item c and draws only from streams[c].
struct StateBatch {
    std::vector<Eigen::MatrixXd> layers;
    std::vector<RngStream> streams;

    StateBatch(const LayerSpec& layout, std::vector<RngStream> rngs) : streams(std::move(rngs)) {
        for (auto w : layout.sizes)
            layers.push_back(Eigen::MatrixXd::Zero(Eigen::Index(w), Eigen::Index(streams.size())));
    }
    [[nodiscard]] Eigen::Index size() const { return Eigen::Index(streams.size()); }
};

/// Total input to every unit of `target` from the adjacent layers (intra-layer
/// input excluded). `use_above = false` zeroes the contribution of target + 1.
inline Eigen::MatrixXd layer_input(const BoltzmannMachine& m, std::size_t target,
                                   const std::vector<Eigen::MatrixXd>& layers, bool use_above) {
    const auto b = Eigen::Index(layers.front().cols());
    Eigen::MatrixXd in(m.width(target), b);
    in.colwise() = m.layer_biases(target);
    if (target >= 1) in.noalias() += m.block(target - 1, target).transpose() * layers[target - 1];
    if (use_above && target + 1 < m.layout.layers()) in.noalias() += m.block(target, target + 1) * layers[target + 1];
    return in;
}

inline Eigen::MatrixXd layer_probs(const BoltzmannMachine& m, std::size_t target,
                                   const std::vector<Eigen::MatrixXd>& layers, bool use_above) {
    return sigmoid(layer_input(m, target, layers, use_above));
}

/// dst(:, c) ~ Bernoulli(probs(:, c)) using streams[c], units in ascending order.
inline void sample_into(Eigen::MatrixXd& dst, const Eigen::MatrixXd& probs, std::span<RngStream> streams) {
    dst.resize(probs.rows(), probs.cols());
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        auto& rng = streams[std::size_t(c)];
        for (Eigen::Index j = 0; j < probs.rows(); ++j) dst(j, c) = rng.uniform() < probs(j, c) ? 1.0 : 0.0;
    }
}

/// One asynchronous sweep over `layer` for every item: units in ascending index
/// order, each resampled from sigmoid(intra input from the latest states +
/// input from the layer below + bias).
inline void async_sweep(const BoltzmannMachine& m, std::size_t layer, StateBatch& batch) {
    const auto intra = m.block(layer, layer);
    Eigen::MatrixXd field(m.width(layer), batch.size());
    field.colwise() = m.layer_biases(layer);
    if (layer >= 1) field.noalias() += m.block(layer - 1, layer).transpose() * batch.layers[layer - 1];
    auto& h = batch.layers[layer];
    field.noalias() += intra * h;
    for (Eigen::Index c = 0; c < batch.size(); ++c) {
        auto& rng = batch.streams[std::size_t(c)];
        auto f = field.col(c);
        for (Eigen::Index j = 0; j < h.rows(); ++j) {
            const double v = rng.uniform() < sigmoid(f(j)) ? 1.0 : 0.0;
            if (v != h(j, c)) {
                f += (v - h(j, c)) * intra.col(j);
                h(j, c) = v;
            }
        }
    }
}

/// Bottom-up pass: h_i ~ p(h_i | h_{i-1}) with the layer above zeroed, followed
/// by `intra_sweeps` asynchronous sweeps where the layer is intra-connected.
inline void e_step_batch(const BoltzmannMachine& m, StateBatch& batch, int intra_sweeps) {
    for (std::size_t i = 1; i < m.layout.layers(); ++i) {
        const Eigen::MatrixXd p = layer_probs(m, i, batch.layers, false);
        sample_into(batch.layers[i], p, batch.streams);
        if (m.layout.has_intra(i))
            for (int s = 0; s < intra_sweeps; ++s) async_sweep(m, i, batch);
    }
}

inline StateBatch make_batch(const BoltzmannMachine& m, const BitMatrix& observed, Eigen::Index begin,
                             Eigen::Index end, const RngStream& base, std::uint64_t tag) {
    std::vector<RngStream> streams;
    streams.reserve(std::size_t(end - begin));
    for (Eigen::Index k = begin; k < end; ++k) streams.push_back(base.derive(tag, std::uint64_t(k)));
    StateBatch batch(m.layout, std::move(streams));
    batch.layers[0] = to_real(observed, begin, end);
    return batch;
}

/// E-step for a whole data set: column k of the result is (x_k, h_k), sampled
/// with stream base.derive(kEStep, k). Independent of the thread count.
inline BitMatrix e_step_all(const BoltzmannMachine& m, const BitMatrix& data, const RngStream& base,
                            int intra_sweeps, int threads = 1) {
    require(data.cols() > 0, "e_step: empty data");
    require(data.rows() == m.width(0), "e_step: data width does not match the observed layer");
    BitMatrix out(Eigen::Index(m.n()), data.cols());
    out.topRows(data.rows()) = data;
    constexpr std::size_t chunk = 256;
    parallel_chunks(std::size_t(data.cols()), chunk, threads, [&](std::size_t b, std::size_t e) {
        StateBatch batch = make_batch(m, data, Eigen::Index(b), Eigen::Index(e), base, stream_tag::kEStep);
        e_step_batch(m, batch, intra_sweeps);
        for (std::size_t i = 1; i < m.layout.layers(); ++i)
            out.block(m.offset(i), Eigen::Index(b), m.width(i), Eigen::Index(e - b)) =
                batch.layers[i].cast<std::uint8_t>();
    });
    return out;
}

namespace detail {
inline std::vector<Eigen::MatrixXd> to_layers(const BoltzmannMachine& m, const LayerStates& s) {
    require(s.layers.size() == m.layout.layers(), "layer states: wrong number of layers");
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
        require(Eigen::Index(s.layers[i].size()) == m.width(i), "layer states: width mismatch in layer " + std::to_string(i));
        out.emplace_back(s.layers[i].as_real());
    }
    return out;
}
inline StateVector column_state(const Eigen::MatrixXd& m, Eigen::Index c = 0) {
    StateVector s(std::size_t(m.rows()));
    for (Eigen::Index j = 0; j < m.rows(); ++j) s.set(std::size_t(j), m(j, c) != 0.0);
    return s;
}
}  // namespace detail

/// p(unit = 1 | adjacent layers) for every unit of target_layer. With zero_above
/// the input from target_layer + 1 is omitted; intra-layer input is never included.
inline Eigen::VectorXd conditional_prob(const BoltzmannMachine& m, std::size_t target_layer,
                                        const LayerStates& states, bool zero_above) {
    require(target_layer < m.layout.layers(),
            "conditional_prob: layer " + std::to_string(target_layer) + " out of range");
    return layer_probs(m, target_layer, detail::to_layers(m, states), !zero_above).col(0);
}

inline StateVector sample_layer(const Eigen::VectorXd& probs, RngStream& rng) {
    for (Eigen::Index j = 0; j < probs.size(); ++j)
        require(probs(j) >= 0.0 && probs(j) <= 1.0, "sample_layer: probability outside [0,1]");
    StateVector s(std::size_t(probs.size()));
    for (Eigen::Index j = 0; j < probs.size(); ++j) s.set(std::size_t(j), rng.uniform() < probs(j));
    return s;
}

/// Single asynchronous sweep of `layer`; returns the new state.
inline StateVector async_gibbs(const BoltzmannMachine& m, std::size_t layer, const LayerStates& states,
                               RngStream& rng) {
    require(layer < m.layout.layers(), "async_gibbs: layer out of range");
    if (!m.layout.has_intra(layer))
        throw InputError("async_gibbs: layer " + std::to_string(layer) + " has no intra-layer connections");
    StateBatch batch(m.layout, {rng});
    batch.layers = detail::to_layers(m, states);
    async_sweep(m, layer, batch);
    rng = batch.streams[0];
    return detail::column_state(batch.layers[layer]);
}

inline LayerStates e_step(const BoltzmannMachine& m, const StateVector& x, RngStream& rng, int intra_sweeps = 1) {
    require(Eigen::Index(x.size()) == m.width(0), "e_step: observed state width mismatch");
    StateBatch batch(m.layout, {rng});
    batch.layers[0] = x.as_real();
    e_step_batch(m, batch, intra_sweeps);
    rng = batch.streams[0];
    LayerStates out;
    for (const auto& l : batch.layers) out.layers.push_back(detail::column_state(l));
    return out;
}

/// Top-layer initialisation for generation: uniform coin flips (DBM-R style) or
/// Bernoulli draws from a prior vector (DBM-P style).
struct TopInit {
    std::optional<Eigen::VectorXd> prior;
    static TopInit uniform() { return {}; }
    static TopInit from_prior(Eigen::VectorXd p) { return {std::move(p)}; }
};

/// Top-down confabulation for every item in the batch: h_l from `init`, then for
/// i = l..1, r rounds of [h_{i-1} ~ p(.|h_i), h_i ~ p(.|h_{i-1}), async sweeps
/// on h_i]. Layers below i-1 are still zero at level i. Returns p(h_0 | h_1).
inline Eigen::MatrixXd generate_batch(const BoltzmannMachine& m, StateBatch& batch, const TopInit& init, int r,
                                      int intra_sweeps) {
    const std::size_t top = m.layout.layers() - 1;
    if (top == 0) throw CapabilityError("generate: machine has no hidden layers");
    require(r >= 1, "generate: r must be at least 1");
    Eigen::MatrixXd top_probs(m.width(top), batch.size());
    if (init.prior) {
        require(init.prior->size() == m.width(top), "generate: prior length does not match the top layer");
        for (Eigen::Index j = 0; j < init.prior->size(); ++j)
            require((*init.prior)(j) >= 0.0 && (*init.prior)(j) <= 1.0, "generate: prior entries must lie in [0,1]");
        top_probs.colwise() = *init.prior;
    } else {
        top_probs.setConstant(0.5);
    }
    sample_into(batch.layers[top], top_probs, batch.streams);
    for (std::size_t i = top; i >= 1; --i) {
        for (int step = 0; step < r; ++step) {
            const Eigen::MatrixXd below = layer_probs(m, i - 1, batch.layers, true);
            sample_into(batch.layers[i - 1], below, batch.streams);
            const Eigen::MatrixXd here = layer_probs(m, i, batch.layers, false);
            sample_into(batch.layers[i], here, batch.streams);
            if (m.layout.has_intra(i))
                for (int s = 0; s < intra_sweeps; ++s) async_sweep(m, i, batch);
        }
    }
    return layer_probs(m, 0, batch.layers, true);
}

inline Eigen::VectorXd generate(const BoltzmannMachine& m, const TopInit& init, int r, RngStream& rng,
                                int intra_sweeps = 1) {
    StateBatch batch(m.layout, {rng});
    Eigen::VectorXd p = generate_batch(m, batch, init, r, intra_sweeps).col(0);
    rng = batch.streams[0];
    return p;
}

/// `count` confabulations (columns, observed-layer probabilities); sample k uses
/// stream base.derive(kGenerate, k).
inline Eigen::MatrixXd generate_many(const BoltzmannMachine& m, std::size_t count, const TopInit& init, int r,
                                     const RngStream& base, int intra_sweeps = 1, int threads = 1) {
    Eigen::MatrixXd out(m.width(0), Eigen::Index(count));
    constexpr std::size_t chunk = 128;
    parallel_chunks(count, chunk, threads, [&](std::size_t b, std::size_t e) {
        std::vector<RngStream> streams;
        for (std::size_t k = b; k < e; ++k) streams.push_back(base.derive(stream_tag::kGenerate, k));
        StateBatch batch(m.layout, std::move(streams));
        out.middleCols(Eigen::Index(b), Eigen::Index(e - b)) = generate_batch(m, batch, init, r, intra_sweeps);
    });
    return out;
}

/// Per-unit mean of the sampled top layer over an E-step of the whole data set.
inline Eigen::VectorXd mean_activation_prior(const BoltzmannMachine& m, const BitMatrix& data, const RngStream& rng,
                                             int intra_sweeps = 1, int threads = 1) {
    require(data.cols() > 0, "mean_activation_prior: empty data");
    const std::size_t top = m.layout.layers() - 1;
    const BitMatrix pairs = e_step_all(m, data, rng, intra_sweeps, threads);
    return pairs.middleRows(m.offset(top), m.width(top)).cast<double>().rowwise().mean();
}

}  // namespace flowbm
