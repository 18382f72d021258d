#include <doctest.h>

#include <random>

#include "racseg/reliability.hpp"
#include "support/oracles.hpp"

using namespace racseg;

TEST_CASE("mean of identical views is the view itself") {
    Mat p(1, 2);
    p << 0.9, 0.1;
    const Mat mean = mean_prediction(p, {p, p});
    CHECK(mean(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(mean(0, 1) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("mean of two views is the midpoint") {
    Mat p(1, 2), q(1, 2);
    p << 0.6, 0.4;
    q << 0.8, 0.2;
    const Mat mean = mean_prediction(p, {q});
    CHECK(mean(0, 0) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(mean(0, 1) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("mean rows sum to one for random inputs") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat p = oracles::random_prob_matrix(8, 4, rng);
        const std::vector<Mat> aug = {oracles::random_prob_matrix(8, 4, rng),
                                      oracles::random_prob_matrix(8, 4, rng)};
        const Mat mean = mean_prediction(p, aug);
        for (Eigen::Index i = 0; i < mean.rows(); ++i)
            CHECK(mean.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("deviation of identical views is zero") {
    Mat p(2, 3);
    p << 0.2, 0.3, 0.5, 0.7, 0.2, 0.1;
    const Mat dev = uncertainty(p, {p, p, p}, mean_prediction(p, {p, p, p}));
    CHECK(dev.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deviation of the two-view example") {
    Mat p(1, 2), q(1, 2);
    p << 0.6, 0.4;
    q << 0.8, 0.2;
    const Mat mean = mean_prediction(p, {q});
    const Mat dev = uncertainty(p, {q}, mean);
    CHECK(dev(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(dev(0, 1) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("deviation is bounded by one half for probabilities") {
    std::mt19937_64 rng(33);
    double max_seen = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Mat p = oracles::random_prob_matrix(6, 3, rng);
        std::vector<Mat> aug;
        for (int k = 0; k < 3; ++k) aug.push_back(oracles::random_prob_matrix(6, 3, rng));
        const Mat dev = uncertainty(p, aug, mean_prediction(p, aug));
        max_seen = std::max(max_seen, dev.maxCoeff());
    }
    CHECK(max_seen <= 0.5 + 1e-12);
}

TEST_CASE("partition threshold examples") {
    Mat p(1, 2), mean(1, 2), dev(1, 2);
    p << 0.9, 0.1;

    mean << 0.9, 0.1;
    dev << 0.0, 0.0;
    auto part = partition(p, mean, dev, 0.7, 0.05);
    CHECK(part.mask[0] == 1);
    CHECK(part.one_hot(0, 0) == 1.0);
    CHECK(part.one_hot(0, 1) == 0.0);

    mean << 0.7, 0.3;
    dev << 0.1, 0.1;
    part = partition(p, mean, dev, 0.7, 0.05);
    CHECK(part.mask[0] == 0);  // confident but unstable
    CHECK(part.soft.row(0) == p.row(0));

    mean << 0.5, 0.5;
    dev << 0.0, 0.0;
    part = partition(p, mean, dev, 0.7, 0.05);
    CHECK(part.mask[0] == 0);  // stable but not confident
}

TEST_CASE("partition validates thresholds and shapes") {
    Mat p(1, 2);
    p << 0.5, 0.5;
    CHECK_THROWS_AS(partition(p, p, p, 0.0, 0.05), ArgumentError);
    CHECK_THROWS_AS(partition(p, p, p, 1.0, 0.05), ArgumentError);
    CHECK_THROWS_AS(partition(p, p, p, 0.7, -1.0), ArgumentError);
    CHECK_THROWS_AS(partition(p, Mat::Zero(2, 2), p, 0.7, 0.05), ArgumentError);
}

TEST_CASE("bundle construction rejects invalid probability rows") {
    Mat p(1, 2);
    p << 0.5, 0.6;
    CHECK_THROWS_AS(mean_prediction(p, {p}), ArgumentError);
    Mat neg(1, 2);
    neg << -0.1, 1.1;
    CHECK_THROWS_AS(mean_prediction(neg, {neg}), ArgumentError);
    Mat ok(1, 2);
    ok << 0.5, 0.5;
    CHECK_THROWS_AS(mean_prediction(ok, {}), ArgumentError);
    CHECK_THROWS_AS(mean_prediction(ok, {Mat::Zero(2, 2)}), ArgumentError);
}

TEST_CASE("equations agree with the literal oracle on random instances") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> n_dist(1, 32), c_dist(2, 5), k_dist(1, 3);
    for (int trial = 0; trial < 300; ++trial) {
        const Eigen::Index n = n_dist(rng), c = c_dist(rng);
        const int k = k_dist(rng);
        const Mat p = oracles::random_prob_matrix(n, c, rng);
        std::vector<Mat> aug;
        for (int v = 0; v < k; ++v) aug.push_back(oracles::random_prob_matrix(n, c, rng));

        const Mat mean = mean_prediction(p, aug);
        const Mat dev = uncertainty(p, aug, mean);
        CHECK((mean - oracles::mean_oracle(p, aug)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((dev - oracles::deviation_oracle(p, aug, mean)).cwiseAbs().maxCoeff() <= 1e-12);

        std::uniform_real_distribution<double> tau_dist(0.2, 0.95), kappa_dist(0.0, 0.3);
        const double tau = tau_dist(rng), kappa = kappa_dist(rng);
        const auto part = partition(p, mean, dev, tau, kappa);
        const auto mask_oracle = oracles::reliable_mask_oracle(mean, dev, tau, kappa);
        for (Eigen::Index i = 0; i < n; ++i) {
            CHECK(static_cast<bool>(part.mask[static_cast<std::size_t>(i)]) ==
                  mask_oracle[static_cast<std::size_t>(i)]);
            if (part.mask[static_cast<std::size_t>(i)]) {
                // One-hot from the argmax of the original prediction.
                Eigen::Index best = 0;
                for (Eigen::Index j = 1; j < c; ++j)
                    if (p(i, j) > p(i, best)) best = j;
                CHECK(part.one_hot(i, best) == 1.0);
                CHECK(part.one_hot.row(i).sum() == 1.0);
                CHECK(part.soft.row(i).cwiseAbs().maxCoeff() == 0.0);
            } else {
                CHECK(part.soft.row(i) == p.row(i));
                CHECK(part.one_hot.row(i).cwiseAbs().maxCoeff() == 0.0);
            }
        }
    }
}

TEST_CASE("monotonicity and subset properties over random instances") {
    std::mt19937_64 rng(515);
    std::uniform_int_distribution<int> n_dist(1, 24), c_dist(2, 5), k_dist(1, 3);
    for (int trial = 0; trial < 300; ++trial) {
        const Eigen::Index n = n_dist(rng), c = c_dist(rng);
        const int k = k_dist(rng);
        const Mat p = oracles::random_prob_matrix(n, c, rng);
        std::vector<Mat> aug;
        for (int v = 0; v < k; ++v) aug.push_back(oracles::random_prob_matrix(n, c, rng));
        const Mat mean = mean_prediction(p, aug);
        const Mat dev = uncertainty(p, aug, mean);

        std::uniform_real_distribution<double> tau_dist(0.2, 0.9), kappa_dist(0.01, 0.3);
        const double tau = tau_dist(rng), kappa = kappa_dist(rng);
        const auto base = partition(p, mean, dev, tau, kappa);
        const auto stricter_tau = partition(p, mean, dev, std::min(0.99, tau + 0.05), kappa);
        const auto stricter_kappa = partition(p, mean, dev, tau, kappa * 0.5);
        const auto conf_only =
            partition(p, mean, dev, tau, std::numeric_limits<double>::infinity());

        long base_count = 0, tau_count = 0, kappa_count = 0;
        for (std::size_t i = 0; i < base.mask.size(); ++i) {
            base_count += base.mask[i];
            tau_count += stricter_tau.mask[i];
            kappa_count += stricter_kappa.mask[i];
            // Raising tau or lowering kappa never adds a reliable point.
            CHECK(stricter_tau.mask[i] <= base.mask[i]);
            CHECK(stricter_kappa.mask[i] <= base.mask[i]);
            // (tau, kappa) reliable set is a subset of confidence-only.
            CHECK(base.mask[i] <= conf_only.mask[i]);
        }
        CHECK(tau_count <= base_count);
        CHECK(kappa_count <= base_count);
        // Mask partitions every point into exactly one side.
        long reliable = 0, ambiguous = 0;
        for (const auto m : base.mask) (m ? reliable : ambiguous) += 1;
        CHECK(reliable + ambiguous == static_cast<long>(n));
        CHECK(reliable == base.reliable_count());
    }
}

TEST_CASE("zero deviation exactly characterizes identical views") {
    std::mt19937_64 rng(616);
    const Mat p = oracles::random_prob_matrix(6, 4, rng);

    // identical views -> zero deviation
    const std::vector<Mat> same = {p, p};
    const Mat dev_same = uncertainty(p, same, mean_prediction(p, same));
    CHECK(dev_same.cwiseAbs().maxCoeff() <= 1e-12);

    // any view differing beyond tolerance -> a nonzero entry
    Mat q = p;
    q(3, 1) += 1e-6;
    q(3, 0) -= 1e-6;
    const std::vector<Mat> diff = {q};
    const Mat dev_diff = uncertainty(p, diff, mean_prediction(p, diff));
    CHECK(dev_diff.cwiseAbs().maxCoeff() > 1e-12);
}
