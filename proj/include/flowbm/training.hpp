#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "flowbm/common.hpp"
#include "flowbm/machine.hpp"
#include "flowbm/metrics.hpp"
#include "flowbm/mpf.hpp"
#include "flowbm/optimizer.hpp"
#include "flowbm/rng.hpp"
#include "flowbm/sampling.hpp"

namespace flowbm {

struct EpochLog {
    int epoch = 0;
    double objective_value = 0.0;
    double weight_sparsity = std::numeric_limits<double>::quiet_NaN();
    double squared_weight = std::numeric_limits<double>::quiet_NaN();
    double wall_time_s = 0.0;
};

inline void write_epoch_csv_header(std::ostream& os) {
    os << "epoch,objective,weight_sparsity,squared_weight,wall_time_s\n";
}
inline void write_epoch_csv_row(std::ostream& os, const EpochLog& log) {
    os << log.epoch << ',' << std::setprecision(12) << log.objective_value << ',' << log.weight_sparsity << ','
       << log.squared_weight << ',' << std::setprecision(6) << log.wall_time_s << '\n';
}

/// Everything needed to continue a run: the machine, optimiser moments, the
/// configuration, completed epochs and (PCD only) the persistent chains.
struct TrainingState {
    BoltzmannMachine machine;
    AdamState adam;
    TrainConfig config;
    int epoch = 0;
    std::optional<BitMatrix> chains;

    static TrainingState fresh(const LayerSpec& layout, const TrainConfig& cfg) {
        cfg.check();
        TrainingState s;
        s.machine = new_machine(layout, cfg.seed, cfg.init_scale);
        s.adam = AdamState(s.machine.n());
        s.config = cfg;
        return s;
    }
};

namespace detail {
inline RngStream epoch_stream(const TrainConfig& cfg, int epoch) {
    return RngStream(cfg.seed, 0x7EA1ULL).derive(0xE90C, std::uint64_t(epoch));
}
inline EpochLog finish_log(const BoltzmannMachine& m, int epoch, double objective,
                           std::chrono::steady_clock::time_point start) {
    EpochLog log;
    log.epoch = epoch;
    log.objective_value = objective;
    if (m.layout.layers() >= 2) {
        log.weight_sparsity = weight_sparsity(m);
        log.squared_weight = squared_weight(m);
    }
    log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return log;
}
inline std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(perm, rng);
    return perm;
}
}  // namespace detail

/// Variational EM with probability-flow M-steps. Each epoch: (E) sample hidden
/// layers for every data point from a frozen parameter snapshot, bottom-up with
/// the layer above zeroed; (M) shuffle the (x, h) pairs and take one Adam step
/// per minibatch on the fully-observed flow objective of the joint states.
/// All layers (including intra-layer weights) update together.
class VpfTrainer {
public:
    VpfTrainer(const BitMatrix& data, TrainingState state, int threads = 1)
        : data_(data), state_(std::move(state)), threads_(threads) {
        require(data_.cols() > 0, "train_vpf: empty data");
        require(data_.rows() == state_.machine.width(0), "train_vpf: data width does not match the observed layer");
        state_.config.check();
    }

    /// E-step for the epoch after the last completed one.
    [[nodiscard]] BitMatrix e_step() const {
        const int epoch = state_.epoch + 1;
        if (state_.machine.layout.layers() == 1) return data_;
        return e_step_all(state_.machine, data_, detail::epoch_stream(state_.config, epoch).derive(stream_tag::kEStep, 0),
                          state_.config.intra_sweeps, threads_);
    }

    /// One pass of minibatch Adam steps over the pairs; returns the mean
    /// pre-update flow objective over all examples.
    double m_step(const BitMatrix& pairs) {
        const int epoch = state_.epoch + 1;
        const auto& cfg = state_.config;
        const auto n_items = std::size_t(pairs.cols());
        const auto perm =
            detail::shuffled_indices(n_items, detail::epoch_stream(cfg, epoch).derive(stream_tag::kShuffle, 0));
        Gradient grad(state_.machine.n());
        Eigen::MatrixXd y;
        double flow = 0.0;
        for (std::size_t b = 0; b < n_items; b += std::size_t(cfg.minibatch)) {
            const std::size_t e = std::min(n_items, b + std::size_t(cfg.minibatch));
            y.resize(pairs.rows(), Eigen::Index(e - b));
            for (std::size_t k = b; k < e; ++k) y.col(Eigen::Index(k - b)) = pairs.col(Eigen::Index(perm[k])).cast<double>();
            flow += gradient_into(state_.machine, y, grad, cfg.clamp_z);
            clamped_ += grad.clamped;
            step(state_.machine, grad, state_.adam, cfg);
        }
        return flow / double(n_items);
    }

    /// Marks the current epoch complete, so e_step and m_step move to the next one.
    void end_epoch() { state_.epoch += 1; }

    EpochLog run_epoch() {
        const auto start = std::chrono::steady_clock::now();
        const BitMatrix pairs = e_step();
        const double objective = m_step(pairs);
        end_epoch();
        return detail::finish_log(state_.machine, state_.epoch, objective, start);
    }

    [[nodiscard]] const TrainingState& state() const { return state_; }
    [[nodiscard]] std::size_t clamp_count() const { return clamped_; }

private:
    const BitMatrix& data_;
    TrainingState state_;
    int threads_;
    std::size_t clamped_ = 0;
};

using EpochCallback = std::function<void(const EpochLog&, const TrainingState&)>;

struct TrainResult {
    BoltzmannMachine machine;
    std::vector<EpochLog> logs;
    TrainingState state;
};

/// Runs VPF from `state` until state.config.epochs epochs are complete.
inline TrainResult continue_vpf(const BitMatrix& data, TrainingState state, int threads = 1,
                                const EpochCallback& on_epoch = {}) {
    VpfTrainer trainer(data, std::move(state), threads);
    std::vector<EpochLog> logs;
    while (trainer.state().epoch < trainer.state().config.epochs) {
        logs.push_back(trainer.run_epoch());
        if (on_epoch) on_epoch(logs.back(), trainer.state());
    }
    return {trainer.state().machine, std::move(logs), trainer.state()};
}

inline TrainResult train_vpf(const BitMatrix& data, const LayerSpec& layout, const TrainConfig& cfg, int threads = 1,
                             const EpochCallback& on_epoch = {}) {
    require(data.cols() > 0, "train_vpf: empty data");
    return continue_vpf(data, TrainingState::fresh(layout, cfg), threads, on_epoch);
}

/// Contrastive-divergence gradient (descent direction) for a plain RBM batch.
/// `chains` holds the negative-phase visible states: reset to the batch for
/// CD-k, carried over for PCD-k. Negative statistics use the k-th visible
/// sample and its hidden probabilities.
inline Gradient cd_gradient(const BoltzmannMachine& m, const Eigen::MatrixXd& v, Eigen::MatrixXd& chains, int k,
                            RngStream& rng, double* recon_sq = nullptr) {
    require(m.layout.is_plain_rbm(), "cd_gradient: plain RBM layout required");
    require(k >= 1, "cd_gradient: k must be at least 1");
    require(v.rows() == m.width(0) && v.cols() > 0, "cd_gradient: batch shape mismatch");
    require(chains.rows() == v.rows() && chains.cols() == v.cols(), "cd_gradient: chain shape mismatch");
    const auto w = m.block(0, 1);
    const auto bv = m.layer_biases(0);
    const auto bh = m.layer_biases(1);
    const auto probs_h = [&](const Eigen::MatrixXd& vis) {
        Eigen::MatrixXd p = w.transpose() * vis;
        p.colwise() += bh;
        return sigmoid(p);
    };
    const auto probs_v = [&](const Eigen::MatrixXd& hid) {
        Eigen::MatrixXd p = w * hid;
        p.colwise() += bv;
        return sigmoid(p);
    };
    const auto draw = [&](const Eigen::MatrixXd& p) {
        return p.unaryExpr([&](double q) { return rng.uniform() < q ? 1.0 : 0.0; }).eval();
    };

    const Eigen::MatrixXd ph_pos = probs_h(v);
    Eigen::MatrixXd ph_neg = probs_h(chains);
    for (int step_k = 0; step_k < k; ++step_k) {
        const Eigen::MatrixXd h = draw(ph_neg);
        const Eigen::MatrixXd pv = probs_v(h);
        if (step_k == 0 && recon_sq) *recon_sq = (pv - chains).squaredNorm() / double(v.cols());
        chains = draw(pv);
        ph_neg = probs_h(chains);
    }

    const double inv = 1.0 / double(v.cols());
    Gradient g(m.n());
    const Eigen::MatrixXd dw = -(v * ph_pos.transpose() - chains * ph_neg.transpose()) * inv;
    g.d_weights.block(m.offset(0), m.offset(1), m.width(0), m.width(1)) = dw;
    g.d_weights.block(m.offset(1), m.offset(0), m.width(1), m.width(0)) = dw.transpose();
    g.d_biases.segment(m.offset(0), m.width(0)) = -(v - chains).rowwise().sum() * inv;
    g.d_biases.segment(m.offset(1), m.width(1)) = -(ph_pos - ph_neg).rowwise().sum() * inv;
    return g;
}

/// CD-k / PCD-k baseline with the same minibatching and Adam step as VPF.
/// The logged objective is the mean squared one-step reconstruction error.
class CdTrainer {
public:
    CdTrainer(const BitMatrix& data, TrainingState state) : data_(data), state_(std::move(state)) {
        if (!state_.machine.layout.is_plain_rbm())
            throw CapabilityError("train_cd: contrastive divergence baselines need a single hidden layer without "
                                  "intra-layer connections");
        require(data_.cols() > 0, "train_cd: empty data");
        require(data_.rows() == state_.machine.width(0), "train_cd: data width does not match the visible layer");
        state_.config.check();
    }

    EpochLog run_epoch() {
        const auto start = std::chrono::steady_clock::now();
        const auto& cfg = state_.config;
        const bool persistent = cfg.method == Method::Pcd;
        const int epoch = state_.epoch + 1;
        const RngStream root = detail::epoch_stream(cfg, epoch);
        const auto n_items = std::size_t(data_.cols());
        const auto perm = detail::shuffled_indices(n_items, root.derive(stream_tag::kShuffle, 0));
        const auto mb = std::size_t(cfg.minibatch);
        if (persistent && !state_.chains) {
            state_.chains = BitMatrix(data_.rows(), Eigen::Index(std::min(mb, n_items)));
            for (Eigen::Index c = 0; c < state_.chains->cols(); ++c)
                state_.chains->col(c) = data_.col(Eigen::Index(perm[std::size_t(c)]));
        }
        double recon = 0.0;
        Eigen::MatrixXd v, chains;
        std::size_t batch_index = 0;
        for (std::size_t b = 0; b < n_items; b += mb, ++batch_index) {
            const std::size_t e = std::min(n_items, b + mb);
            v.resize(data_.rows(), Eigen::Index(e - b));
            for (std::size_t k = b; k < e; ++k) v.col(Eigen::Index(k - b)) = data_.col(Eigen::Index(perm[k])).cast<double>();
            if (persistent) {
                chains = state_.chains->leftCols(v.cols()).cast<double>();
            } else {
                chains = v;
            }
            RngStream rng = root.derive(stream_tag::kChains, batch_index);
            double sq = 0.0;
            const Gradient g = cd_gradient(state_.machine, v, chains, cfg.cd_k, rng, &sq);
            recon += sq * double(v.cols());
            if (persistent) state_.chains->leftCols(v.cols()) = chains.cast<std::uint8_t>();
            step(state_.machine, g, state_.adam, cfg);
        }
        state_.epoch = epoch;
        return detail::finish_log(state_.machine, epoch, recon / double(n_items), start);
    }

    [[nodiscard]] const TrainingState& state() const { return state_; }

private:
    const BitMatrix& data_;
    TrainingState state_;
};

/// CD epochs run on one thread; the thread count is accepted for a uniform signature.
inline TrainResult continue_cd(const BitMatrix& data, TrainingState state, int /*threads*/ = 1,
                               const EpochCallback& on_epoch = {}) {
    CdTrainer trainer(data, std::move(state));
    std::vector<EpochLog> logs;
    while (trainer.state().epoch < trainer.state().config.epochs) {
        logs.push_back(trainer.run_epoch());
        if (on_epoch) on_epoch(logs.back(), trainer.state());
    }
    return {trainer.state().machine, std::move(logs), trainer.state()};
}

/// persistent selects PCD-k; k overrides cfg.cd_k.
inline TrainResult train_cd(const BitMatrix& data, const LayerSpec& layout, int k, bool persistent, TrainConfig cfg,
                            int threads = 1, const EpochCallback& on_epoch = {}) {
    if (!layout.is_plain_rbm())
        throw CapabilityError("train_cd: contrastive divergence baselines need a single hidden layer without "
                              "intra-layer connections");
    require(k >= 1, "train_cd: k must be at least 1");
    cfg.cd_k = k;
    cfg.method = persistent ? Method::Pcd : Method::Cd;
    return continue_cd(data, TrainingState::fresh(layout, cfg), threads, on_epoch);
}

/// Dispatches on state.config.method.
inline TrainResult continue_training(const BitMatrix& data, TrainingState state, int threads = 1,
                                     const EpochCallback& on_epoch = {}) {
    if (state.config.method == Method::Vpf) return continue_vpf(data, std::move(state), threads, on_epoch);
    return continue_cd(data, std::move(state), threads, on_epoch);
}

}  // namespace flowbm
