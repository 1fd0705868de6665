#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "flowbm/common.hpp"
#include "flowbm/machine.hpp"
#include "flowbm/rng.hpp"
#include "flowbm/sampling.hpp"
#include "flowbm/state.hpp"

namespace flowbm {

namespace detail {
inline void require_hidden(const BoltzmannMachine& m, const char* who) {
    if (m.layout.layers() < 2) throw CapabilityError(std::string(who) + ": machine has no hidden layer");
}
}  // namespace detail

/// rho = 1/(|x||h|) sum_j (sum_i w_ij^2)^2 / sum_i w_ij^4 over the
/// visible-to-first-hidden weights; an all-zero column contributes 0.
inline double weight_sparsity(const BoltzmannMachine& m) {
    detail::require_hidden(m, "weight_sparsity");
    const auto w = m.block(0, 1);
    double total = 0.0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
        const double s2 = w.col(j).squaredNorm();
        const double s4 = w.col(j).array().square().square().sum();
        if (s4 > 0.0) total += s2 * s2 / s4;
    }
    return total / double(w.rows() * w.cols());
}

/// w^2 = (1/|h|) sum_ij w_ij^2 over the same block.
inline double squared_weight(const BoltzmannMachine& m) {
    detail::require_hidden(m, "squared_weight");
    const auto w = m.block(0, 1);
    return w.squaredNorm() / double(w.cols());
}

enum class Corruption { Top, Bottom, Left, Right };

inline const std::array<Corruption, 4> kAllCorruptions = {Corruption::Top, Corruption::Bottom, Corruption::Left,
                                                          Corruption::Right};

inline std::string to_string(Corruption c) {
    switch (c) {
        case Corruption::Top: return "top";
        case Corruption::Bottom: return "bottom";
        case Corruption::Left: return "left";
        case Corruption::Right: return "right";
    }
    return "?";
}
inline Corruption parse_corruption(const std::string& s) {
    for (auto c : kAllCorruptions)
        if (to_string(c) == s) return c;
    throw InputError("unknown corruption pattern '" + s + "' (expected top, bottom, left or right)");
}

inline constexpr int kImageSide = 28;
inline constexpr int kCorruptedLines = 12;

struct CorruptedImage {
    StateVector image;
    std::vector<bool> known;
};

/// Marks the 12 rows/columns on the given side of a 28x28 row-major image as
/// unknown and replaces them with fair coin flips.
inline CorruptedImage corrupt(const StateVector& image, Corruption pattern, RngStream& rng) {
    require(image.size() == std::size_t(kImageSide * kImageSide),
            "corrupt: expected a 784-pixel image, got " + std::to_string(image.size()));
    CorruptedImage out{image, std::vector<bool>(image.size(), true)};
    for (int r = 0; r < kImageSide; ++r)
        for (int c = 0; c < kImageSide; ++c) {
            bool hit = false;
            switch (pattern) {
                case Corruption::Top: hit = r < kCorruptedLines; break;
                case Corruption::Bottom: hit = r >= kImageSide - kCorruptedLines; break;
                case Corruption::Left: hit = c < kCorruptedLines; break;
                case Corruption::Right: hit = c >= kImageSide - kCorruptedLines; break;
            }
            if (!hit) continue;
            const auto idx = std::size_t(r * kImageSide + c);
            out.known[idx] = false;
            out.image.set(idx, rng.bernoulli(0.5));
        }
    return out;
}

/// In-place reconstruction of a batch of chains (columns of `visible`). Each
/// step samples the hidden layer (plus intra sweeps) and resamples unknown
/// visible pixels; known pixels stay clamped. Unknown pixels end at the last
/// visible probabilities thresholded at 0.5, an exact 0.5 broken by a coin flip.
inline void reconstruct_batch(const BoltzmannMachine& m, StateBatch& batch, const BitMatrix& known, int gibbs_steps,
                              int intra_sweeps) {
    if (m.layout.layers() != 2)
        throw CapabilityError("reconstruct: only machines with a single hidden layer are supported");
    require(gibbs_steps >= 1, "reconstruct: gibbs_steps must be at least 1");
    auto& v = batch.layers[0];
    require(known.rows() == v.rows() && known.cols() == v.cols(), "reconstruct: mask shape mismatch");
    Eigen::MatrixXd pv;
    for (int step = 0; step < gibbs_steps; ++step) {
        const Eigen::MatrixXd ph = layer_probs(m, 1, batch.layers, false);
        sample_into(batch.layers[1], ph, batch.streams);
        if (m.layout.has_intra(1))
            for (int s = 0; s < intra_sweeps; ++s) async_sweep(m, 1, batch);
        pv = layer_probs(m, 0, batch.layers, true);
        if (step + 1 == gibbs_steps) break;
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            auto& rng = batch.streams[std::size_t(c)];
            for (Eigen::Index j = 0; j < v.rows(); ++j)
                if (!known(j, c)) v(j, c) = rng.uniform() < pv(j, c) ? 1.0 : 0.0;
        }
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
        auto& rng = batch.streams[std::size_t(c)];
        for (Eigen::Index j = 0; j < v.rows(); ++j) {
            if (known(j, c)) continue;
            if (pv(j, c) == 0.5) v(j, c) = rng.bernoulli(0.5) ? 1.0 : 0.0;
            else v(j, c) = pv(j, c) > 0.5 ? 1.0 : 0.0;
        }
    }
}

inline StateVector reconstruct(const BoltzmannMachine& m, const StateVector& corrupted, const std::vector<bool>& known,
                               int gibbs_steps, RngStream& rng, int intra_sweeps = 1) {
    require(Eigen::Index(corrupted.size()) == m.width(0), "reconstruct: image width does not match the visible layer");
    require(known.size() == corrupted.size(), "reconstruct: mask length does not match image");
    StateBatch batch(m.layout, {rng});
    batch.layers[0] = corrupted.as_real();
    BitMatrix k(Eigen::Index(known.size()), 1);
    for (std::size_t i = 0; i < known.size(); ++i) k(Eigen::Index(i), 0) = known[i] ? 1 : 0;
    reconstruct_batch(m, batch, k, gibbs_steps, intra_sweeps);
    rng = batch.streams[0];
    return detail::column_state(batch.layers[0]);
}

/// ||x - x_hat||_1 over bits.
inline double recon_error(const StateVector& original, const StateVector& reconstructed) {
    require(original.size() == reconstructed.size(), "recon_error: length mismatch");
    double e = 0.0;
    for (std::size_t i = 0; i < original.size(); ++i) e += original[i] != reconstructed[i] ? 1.0 : 0.0;
    return e;
}

struct ReconResult {
    double mean_error = 0.0;            ///< mean over trials of the per-image mean L1 error
    std::vector<double> trial_errors;   ///< one mean error per trial
    BitMatrix corrupted;                ///< first trial's corrupted images
    BitMatrix reconstructed;            ///< first trial's reconstructions
};

/// Corrupts every test image with `pattern`, reconstructs it and averages the L1
/// error, repeated over `trials` independent corruptions. Image k of trial t
/// uses stream base.derive(kReconstruct, t * N + k).
inline ReconResult reconstruction_experiment(const BoltzmannMachine& m, const BitMatrix& test, Corruption pattern,
                                             int gibbs_steps, int trials, const RngStream& base,
                                             int intra_sweeps = 1, int threads = 1) {
    require(test.cols() > 0, "reconstruction: empty test set");
    require(test.rows() == kImageSide * kImageSide, "reconstruction: images must be 28x28");
    require(trials >= 1, "reconstruction: trials must be at least 1");
    ReconResult res;
    const auto count = std::size_t(test.cols());
    constexpr std::size_t chunk = 256;
    for (int t = 0; t < trials; ++t) {
        BitMatrix corrupted(test.rows(), test.cols()), recon(test.rows(), test.cols());
        std::vector<double> partial((count + chunk - 1) / chunk, 0.0);
        parallel_chunks(count, chunk, threads, [&](std::size_t b, std::size_t e) {
            std::vector<RngStream> streams;
            BitMatrix known(test.rows(), Eigen::Index(e - b));
            for (std::size_t k = b; k < e; ++k) {
                streams.push_back(base.derive(stream_tag::kReconstruct, std::uint64_t(t) * count + k));
                const auto ci = corrupt(StateVector::from_column(test.col(Eigen::Index(k))), pattern, streams.back());
                corrupted.col(Eigen::Index(k)) = ci.image.as_column();
                for (std::size_t j = 0; j < ci.known.size(); ++j) known(Eigen::Index(j), Eigen::Index(k - b)) = ci.known[j];
            }
            StateBatch batch(m.layout, std::move(streams));
            batch.layers[0] = to_real(corrupted, Eigen::Index(b), Eigen::Index(e));
            reconstruct_batch(m, batch, known, gibbs_steps, intra_sweeps);
            recon.middleCols(Eigen::Index(b), Eigen::Index(e - b)) = batch.layers[0].cast<std::uint8_t>();
            double err = 0.0;
            for (std::size_t k = b; k < e; ++k)
                err += double((recon.col(Eigen::Index(k)).array() != test.col(Eigen::Index(k)).array()).count());
            partial[b / chunk] = err;
        });
        double total = 0.0;
        for (double p : partial) total += p;
        res.trial_errors.push_back(total / double(count));
        if (t == 0) {
            res.corrupted = corrupted;
            res.reconstructed = recon;
        }
    }
    for (double e : res.trial_errors) res.mean_error += e;
    res.mean_error /= double(trials);
    return res;
}

struct ParzenResult {
    double mean_ll = 0.0;
    double standard_error = 0.0;
    std::vector<double> per_point;
};

/// Gaussian Parzen-window log-likelihood of each test column under isotropic
/// kernels of bandwidth sigma centred at the sample columns (streamed
/// log-sum-exp). Returns the mean and its standard error over test points.
inline ParzenResult parzen_ll(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& test, double sigma,
                              int threads = 1) {
    require(sigma > 0.0, "parzen_ll: sigma must be positive");
    require(samples.cols() > 0, "parzen_ll: no samples");
    require(test.cols() > 0, "parzen_ll: no test points");
    require(samples.rows() == test.rows(), "parzen_ll: samples and test points differ in dimension");
    const double d = double(test.rows());
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double log_norm = -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - std::log(double(samples.cols()));
    const Eigen::VectorXd sample_sq = samples.colwise().squaredNorm().transpose();

    ParzenResult res;
    res.per_point.assign(std::size_t(test.cols()), 0.0);
    constexpr std::size_t test_chunk = 128;
    constexpr Eigen::Index sample_chunk = 4096;
    parallel_chunks(std::size_t(test.cols()), test_chunk, threads, [&](std::size_t b, std::size_t e) {
        const auto t = test.middleCols(Eigen::Index(b), Eigen::Index(e - b));
        const Eigen::VectorXd test_sq = t.colwise().squaredNorm().transpose();
        Eigen::VectorXd run_max = Eigen::VectorXd::Constant(t.cols(), -std::numeric_limits<double>::infinity());
        Eigen::VectorXd run_sum = Eigen::VectorXd::Zero(t.cols());
        for (Eigen::Index s0 = 0; s0 < samples.cols(); s0 += sample_chunk) {
            const Eigen::Index ns = std::min(sample_chunk, samples.cols() - s0);
            Eigen::MatrixXd logk = -2.0 * (t.transpose() * samples.middleCols(s0, ns));
            for (Eigen::Index i = 0; i < logk.rows(); ++i)
                for (Eigen::Index j = 0; j < ns; ++j)
                    logk(i, j) = -std::max(0.0, logk(i, j) + test_sq(i) + sample_sq(s0 + j)) * inv2s2;
            for (Eigen::Index i = 0; i < logk.rows(); ++i) {
                const double mx = logk.row(i).maxCoeff();
                if (mx > run_max(i)) {
                    run_sum(i) *= std::exp(run_max(i) - mx);
                    run_max(i) = mx;
                }
                run_sum(i) += (logk.row(i).array() - run_max(i)).exp().sum();
            }
        }
        for (Eigen::Index i = 0; i < t.cols(); ++i)
            res.per_point[b + std::size_t(i)] = run_max(i) + std::log(run_sum(i)) + log_norm;
    });
    double sum = 0.0;
    for (double v : res.per_point) sum += v;
    res.mean_ll = sum / double(res.per_point.size());
    if (res.per_point.size() > 1) {
        double ss = 0.0;
        for (double v : res.per_point) ss += (v - res.mean_ll) * (v - res.mean_ll);
        res.standard_error = std::sqrt(ss / double(res.per_point.size() - 1) / double(res.per_point.size()));
    }
    return res;
}

struct ActivationStats {
    static constexpr int kBins = 20;
    std::array<std::size_t, kBins> histogram{};  ///< bin k covers [k/20, (k+1)/20), last bin closed
    Eigen::VectorXd unit_means;
    double overall_mean = 0.0;
};

/// Mean sampled activation of each first-hidden-layer unit over an E-step of `data`.
inline ActivationStats activation_stats(const BoltzmannMachine& m, const BitMatrix& data, const RngStream& rng,
                                        int intra_sweeps = 1, int threads = 1) {
    detail::require_hidden(m, "activation_stats");
    require(data.cols() > 0, "activation_stats: empty data");
    const BitMatrix pairs = e_step_all(m, data, rng, intra_sweeps, threads);
    ActivationStats st;
    st.unit_means = pairs.middleRows(m.offset(1), m.width(1)).cast<double>().rowwise().mean();
    for (Eigen::Index j = 0; j < st.unit_means.size(); ++j) {
        const int bin = std::min(ActivationStats::kBins - 1, int(st.unit_means(j) * ActivationStats::kBins));
        ++st.histogram[std::size_t(bin)];
    }
    st.overall_mean = st.unit_means.mean();
    return st;
}

struct EvalReport {
    std::map<std::string, double> recon_errors;
    std::optional<double> parzen_ll;
    std::optional<double> standard_error;
    std::optional<double> mean_activation;
    std::optional<double> rho;
    std::optional<double> w2;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        if (!recon_errors.empty()) j["recon_errors"] = recon_errors;
        if (parzen_ll) j["parzen_ll"] = *parzen_ll;
        if (standard_error) j["standard_error"] = *standard_error;
        if (mean_activation) j["mean_activation"] = *mean_activation;
        if (rho) j["rho"] = *rho;
        if (w2) j["w2"] = *w2;
        return j;
    }

    /// metric,key,value rows with a header.
    void write_csv(std::ostream& os) const {
        os << "metric,key,value\n";
        os << std::setprecision(10);
        for (const auto& [k, v] : recon_errors) os << "recon_error," << k << ',' << v << '\n';
        if (parzen_ll) os << "parzen_ll,mean," << *parzen_ll << '\n';
        if (standard_error) os << "parzen_ll,standard_error," << *standard_error << '\n';
        if (mean_activation) os << "mean_activation,," << *mean_activation << '\n';
        if (rho) os << "rho,," << *rho << '\n';
        if (w2) os << "w2,," << *w2 << '\n';
    }
};

}  // namespace flowbm
