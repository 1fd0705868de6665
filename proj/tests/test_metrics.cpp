#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "flowbm/metrics.hpp"
#include "support.hpp"

using namespace flowbm;

namespace {

BoltzmannMachine rbm_with_block(const Eigen::MatrixXd& w) {
    BoltzmannMachine m(LayerSpec({std::size_t(w.rows()), std::size_t(w.cols())}, {false}));
    m.block(0, 1) = w;
    m.block(1, 0) = w.transpose();
    return m;
}

StateVector random_image(std::mt19937& gen) { return fixture::random_state(784, gen); }

/// Log of the Gaussian kernel mean computed term by term without log-sum-exp.
double naive_parzen(const Eigen::MatrixXd& samples, const Eigen::VectorXd& x, double sigma) {
    const double d = double(x.size());
    double sum = 0.0;
    for (Eigen::Index s = 0; s < samples.cols(); ++s) {
        const double r2 = (samples.col(s) - x).squaredNorm();
        sum += std::exp(-r2 / (2 * sigma * sigma)) / std::pow(2 * std::numbers::pi * sigma * sigma, d / 2);
    }
    return std::log(sum / double(samples.cols()));
}

}  // namespace

TEST(WeightSparsity, ConstantWeightsGiveOne) {
    EXPECT_DOUBLE_EQ(weight_sparsity(rbm_with_block(Eigen::MatrixXd::Constant(7, 3, 0.4))), 1.0);
}

TEST(WeightSparsity, OneWeightPerColumnGivesInverseVisibleCount) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(9, 4);
    for (Eigen::Index j = 0; j < 4; ++j) w(2 * j, j) = 0.5 + double(j);
    EXPECT_DOUBLE_EQ(weight_sparsity(rbm_with_block(w)), 1.0 / 9.0);
}

TEST(WeightSparsity, RandomMatrixMatchesDirectFormula) {
    std::mt19937 gen(1);
    std::normal_distribution<double> d;
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd w(6, 4);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = d(gen);
        double rho = 0.0;
        for (int j = 0; j < 4; ++j) {
            double s2 = 0, s4 = 0;
            for (int i = 0; i < 6; ++i) s2 += w(i, j) * w(i, j), s4 += std::pow(w(i, j), 4);
            rho += s2 * s2 / s4;
        }
        rho /= 24.0;
        EXPECT_NEAR(weight_sparsity(rbm_with_block(w)), rho, 1e-12);
        EXPECT_GT(rho, 0.0);
        EXPECT_LE(rho, 1.0);
    }
}

TEST(WeightSparsity, ZeroColumnContributesNothing) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(5, 2);
    w.col(0).setConstant(1.0);
    EXPECT_DOUBLE_EQ(weight_sparsity(rbm_with_block(w)), 0.5);
}

TEST(WeightSparsity, UsesOnlyVisibleToFirstHiddenBlock) {
    auto m = fixture::random_machine(LayerSpec({5, 4, 3}, {true, false}), 2, 1.0);
    const double rho = weight_sparsity(m), w2 = squared_weight(m);
    m.block(1, 1).setConstant(9.0);
    m.block(1, 1).diagonal().setZero();
    m.block(1, 2).setConstant(9.0);
    m.block(2, 1).setConstant(9.0);
    EXPECT_EQ(weight_sparsity(m), rho);
    EXPECT_EQ(squared_weight(m), w2);
}

TEST(WeightSparsity, NoHiddenLayerIsCapabilityError) {
    BoltzmannMachine m(LayerSpec::fully_observed(4));
    EXPECT_THROW(weight_sparsity(m), CapabilityError);
    EXPECT_THROW(squared_weight(m), CapabilityError);
}

TEST(SquaredWeight, HandValues) {
    EXPECT_EQ(squared_weight(rbm_with_block(Eigen::MatrixXd::Zero(4, 3))), 0.0);
    EXPECT_NEAR(squared_weight(rbm_with_block(Eigen::MatrixXd::Constant(8, 3, 0.3))), 0.09 * 8, 1e-15);
    std::mt19937 gen(3);
    std::normal_distribution<double> d;
    Eigen::MatrixXd w(6, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = d(gen);
    double direct = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) direct += w(i, j) * w(i, j);
    EXPECT_NEAR(squared_weight(rbm_with_block(w)), direct / 4.0, 1e-12);
}

TEST(Corrupt, PatternsMarkTheNamedSide) {
    std::mt19937 gen(4);
    const auto img = random_image(gen);
    for (auto pattern : kAllCorruptions) {
        RngStream rng(5, std::uint64_t(pattern));
        const auto c = corrupt(img, pattern, rng);
        int unknown = 0;
        for (int r = 0; r < 28; ++r)
            for (int col = 0; col < 28; ++col) {
                const auto i = std::size_t(r * 28 + col);
                bool expect_unknown = false;
                switch (pattern) {
                    case Corruption::Top: expect_unknown = r <= 11; break;
                    case Corruption::Bottom: expect_unknown = r >= 16; break;
                    case Corruption::Left: expect_unknown = col <= 11; break;
                    case Corruption::Right: expect_unknown = col >= 16; break;
                }
                EXPECT_EQ(c.known[i], !expect_unknown);
                unknown += !c.known[i];
                if (c.known[i]) {
                    EXPECT_EQ(c.image[i], img[i]);
                }
            }
        EXPECT_EQ(unknown, 12 * 28);
    }
}

TEST(Corrupt, UnknownPixelsAreFairCoins) {
    const StateVector zeros(784);
    RngStream rng(6, 6);
    double on = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const auto c = corrupt(zeros, Corruption::Left, rng);
        for (std::size_t i = 0; i < 784; ++i) on += !c.known[i] && c.image[i];
    }
    EXPECT_NEAR(on / (trials * 336.0), 0.5, 0.01);
}

TEST(Corrupt, WrongSizeAndNamesAreInputErrors) {
    RngStream rng(7, 7);
    EXPECT_THROW(corrupt(StateVector(100), Corruption::Top, rng), InputError);
    EXPECT_EQ(parse_corruption("bottom"), Corruption::Bottom);
    EXPECT_THROW(parse_corruption("diagonal"), InputError);
}

TEST(Reconstruct, FullyKnownImageIsUnchanged) {
    const auto m = fixture::random_machine(LayerSpec({784, 20}, {false}), 8, 1.0);
    std::mt19937 gen(9);
    const auto img = random_image(gen);
    RngStream rng(8, 8);
    EXPECT_EQ(reconstruct(m, img, std::vector<bool>(784, true), 5, rng).bits(), img.bits());
}

TEST(Reconstruct, ZeroMachineFillsFairCoins) {
    BoltzmannMachine m(LayerSpec({784, 10}, {false}));
    std::mt19937 gen(10);
    const auto img = random_image(gen);
    std::vector<bool> known(784, true);
    known[100] = false;
    RngStream rng(9, 9);
    double on = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) on += reconstruct(m, img, known, 2, rng)[100];
    EXPECT_NEAR(on / trials, 0.5, 0.02);
}

TEST(Reconstruct, NeverAltersKnownPixels) {
    for (bool intra : {false, true}) {
        const auto m = fixture::random_machine(LayerSpec({784, 30}, {intra}), 11, 2.0);
        std::mt19937 gen(12);
        for (auto pattern : kAllCorruptions) {
            RngStream rng(10, std::uint64_t(pattern));
            const auto c = corrupt(random_image(gen), pattern, rng);
            const auto r = reconstruct(m, c.image, c.known, 3, rng);
            for (std::size_t i = 0; i < 784; ++i)
                if (c.known[i]) {
                    ASSERT_EQ(r[i], c.image[i]);
                }
        }
    }
}

TEST(Reconstruct, ThresholdsFinalProbabilities) {
    // Strong visible biases decide unknown pixels regardless of the chain.
    BoltzmannMachine m(LayerSpec({784, 5}, {false}));
    for (Eigen::Index i = 0; i < 784; ++i) m.biases(i) = i % 2 ? 4.0 : -4.0;
    std::vector<bool> known(784, false);
    RngStream rng(11, 11);
    const auto r = reconstruct(m, StateVector(784), known, 2, rng);
    for (std::size_t i = 0; i < 784; ++i) EXPECT_EQ(r[i], i % 2);
}

TEST(Reconstruct, RejectsBadInputs) {
    BoltzmannMachine m(LayerSpec({784, 5}, {false}));
    RngStream rng(12, 12);
    EXPECT_THROW(reconstruct(m, StateVector(784), std::vector<bool>(783, true), 2, rng), InputError);
    EXPECT_THROW(reconstruct(m, StateVector(780), std::vector<bool>(780, true), 2, rng), InputError);
    BoltzmannMachine deep(LayerSpec({784, 5, 3}, {false, false}));
    EXPECT_THROW(reconstruct(deep, StateVector(784), std::vector<bool>(784, true), 2, rng), CapabilityError);
}

TEST(ReconError, CountsDifferingBits) {
    std::mt19937 gen(13);
    const auto a = random_image(gen);
    EXPECT_EQ(recon_error(a, a), 0.0);
    StateVector comp = a;
    for (std::size_t i = 0; i < 784; ++i) comp.flip(i);
    EXPECT_EQ(recon_error(a, comp), 784.0);
    StateVector twelve = a;
    for (std::size_t i = 0; i < 12; ++i) twelve.flip(i * 50);
    EXPECT_EQ(recon_error(a, twelve), 12.0);
    EXPECT_THROW(recon_error(a, StateVector(10)), InputError);
}

TEST(ReconstructionExperiment, DeterministicAndConsistent) {
    const auto m = fixture::random_machine(LayerSpec({784, 16}, {false}), 14, 0.5);
    const BitMatrix test = fixture::random_bits(784, 300, 15, 0.2);
    const RngStream base(16, 0);
    const auto a = reconstruction_experiment(m, test, Corruption::Right, 2, 3, base, 1, 1);
    const auto b = reconstruction_experiment(m, test, Corruption::Right, 2, 3, base, 1, 3);
    EXPECT_EQ(a.trial_errors, b.trial_errors);
    ASSERT_EQ(a.trial_errors.size(), 3u);
    EXPECT_NEAR(a.mean_error, (a.trial_errors[0] + a.trial_errors[1] + a.trial_errors[2]) / 3.0, 1e-12);
    double err = 0.0;
    for (Eigen::Index k = 0; k < test.cols(); ++k)
        err += recon_error(StateVector::from_column(test.col(k)), StateVector::from_column(a.reconstructed.col(k)));
    EXPECT_DOUBLE_EQ(a.trial_errors[0], err / 300.0);
    EXPECT_LE(a.mean_error, 336.0);
}

TEST(Parzen, SelfEvaluationClosedForm) {
    std::mt19937 gen(17);
    const Eigen::VectorXd s = random_image(gen).as_real();
    const auto r = parzen_ll(s, s, 0.2);
    const double closed = -(784.0 / 2.0) * std::log(2 * std::numbers::pi * 0.04);
    EXPECT_NEAR(closed, 541.3515, 1e-4);
    EXPECT_NEAR(r.mean_ll, closed, 1e-9);
    EXPECT_EQ(r.standard_error, 0.0);
}

TEST(Parzen, DuplicateSamplesDoNotChangeEstimate) {
    std::mt19937 gen(18);
    const Eigen::VectorXd s = random_image(gen).as_real();
    Eigen::MatrixXd two(784, 2);
    two << s, s;
    const Eigen::MatrixXd test = to_real(fixture::random_bits(784, 5, 19));
    const auto one_r = parzen_ll(s, test, 0.2), two_r = parzen_ll(two, test, 0.2);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(one_r.per_point[k], two_r.per_point[k], 1e-9);
}

TEST(Parzen, MatchesNaiveSumInTenDimensions) {
    std::mt19937 gen(20);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd samples(10, 50), test(10, 20);
    for (Eigen::Index i = 0; i < samples.size(); ++i) samples.data()[i] = u(gen);
    for (Eigen::Index i = 0; i < test.size(); ++i) test.data()[i] = u(gen);
    for (double sigma : {0.2, 0.5}) {
        const auto r = parzen_ll(samples, test, sigma);
        double mean = 0.0;
        for (Eigen::Index k = 0; k < test.cols(); ++k) {
            const double naive = naive_parzen(samples, test.col(k), sigma);
            EXPECT_NEAR(r.per_point[std::size_t(k)], naive, 1e-9 * std::abs(naive));
            mean += naive / 20.0;
        }
        EXPECT_NEAR(r.mean_ll, mean, 1e-9 * std::abs(mean));
    }
}

TEST(Parzen, PermutationInvariantAndChunked) {
    std::mt19937 gen(21);
    const Eigen::MatrixXd samples = to_real(fixture::random_bits(30, 5000, 22));
    const Eigen::MatrixXd test = to_real(fixture::random_bits(30, 300, 23));
    const auto r = parzen_ll(samples, test, 0.2, 1);
    std::vector<int> ps(5000), pt(300);
    std::iota(ps.begin(), ps.end(), 0);
    std::iota(pt.begin(), pt.end(), 0);
    std::shuffle(ps.begin(), ps.end(), gen);
    std::shuffle(pt.begin(), pt.end(), gen);
    Eigen::MatrixXd s2(30, 5000), t2(30, 300);
    for (int k = 0; k < 5000; ++k) s2.col(k) = samples.col(ps[std::size_t(k)]);
    for (int k = 0; k < 300; ++k) t2.col(k) = test.col(pt[std::size_t(k)]);
    const auto q = parzen_ll(s2, t2, 0.2, 3);
    EXPECT_NEAR(q.mean_ll, r.mean_ll, 1e-9 * std::abs(r.mean_ll));
    EXPECT_NEAR(q.standard_error, r.standard_error, 1e-9);
    // Standard error of the mean over test points.
    double mean = 0.0, ss = 0.0;
    for (double v : r.per_point) mean += v / 300.0;
    for (double v : r.per_point) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(r.standard_error, std::sqrt(ss / 299.0 / 300.0), 1e-9);
}

TEST(Parzen, RejectsBadArguments) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
    EXPECT_THROW(parzen_ll(Eigen::MatrixXd(4, 0), x, 0.2), InputError);
    EXPECT_THROW(parzen_ll(x, x, 0.0), InputError);
    EXPECT_THROW(parzen_ll(x, Eigen::MatrixXd::Zero(5, 2), 0.2), InputError);
}

TEST(ActivationStats, ZeroMachineHistogram) {
    BoltzmannMachine m(LayerSpec({10, 40}, {false}));
    const auto st = activation_stats(m, fixture::random_bits(10, 5000, 24), RngStream(1, 1));
    EXPECT_NEAR(st.overall_mean, 0.5, 0.01);
    std::size_t total = 0;
    for (auto c : st.histogram) total += c;
    EXPECT_EQ(total, 40u);
    EXPECT_EQ(st.histogram[9] + st.histogram[10], 40u);
    EXPECT_THROW(activation_stats(m, BitMatrix(10, 0), RngStream(1, 1)), InputError);
}

TEST(EvalReport, JsonAndCsv) {
    EvalReport r;
    r.recon_errors["top"] = 32.5;
    r.parzen_ll = 80.0;
    r.standard_error = 2.0;
    r.rho = 0.15;
    const auto j = r.to_json();
    EXPECT_EQ(j["recon_errors"]["top"].get<double>(), 32.5);
    EXPECT_EQ(j["parzen_ll"].get<double>(), 80.0);
    EXPECT_FALSE(j.contains("w2"));
    std::ostringstream os;
    r.write_csv(os);
    EXPECT_EQ(os.str(), "metric,key,value\nrecon_error,top,32.5\nparzen_ll,mean,80\nparzen_ll,standard_error,2\nrho,,0.15\n");
}
