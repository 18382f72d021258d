#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "racseg/losses.hpp"
#include "support/oracles.hpp"

using namespace racseg;

namespace {

Mask full_mask(std::size_t n, bool value) { return Mask(n, value ? 1 : 0); }

Mask random_mask(std::size_t n, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    Mask mask(n);
    for (auto& m : mask) m = coin(rng) ? 1 : 0;
    return mask;
}

Mat random_one_hot(Eigen::Index n, Eigen::Index c, std::mt19937_64& rng) {
    std::uniform_int_distribution<Eigen::Index> pick(0, c - 1);
    Mat out = Mat::Zero(n, c);
    for (Eigen::Index i = 0; i < n; ++i) out(i, pick(rng)) = 1.0;
    return out;
}

/// Finite-difference check of one (value, grad) pair over every logit.
template <typename LossFn>
void check_gradient(Mat logits, const Mat& grad, LossFn&& loss_of_logits, double tol) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            const double numeric = oracles::central_difference(
                [&] { return loss_of_logits(logits); }, logits(i, c));
            CHECK_MESSAGE(oracles::grad_close(grad(i, c), numeric, tol),
                          "entry (" << i << "," << c << "): analytic " << grad(i, c)
                                    << " vs numeric " << numeric);
        }
}

}  // namespace

TEST_CASE("seg loss on a perfect prediction approaches zero") {
    Mat logits(2, 3);
    logits << 30.0, 0.0, 0.0, 0.0, 30.0, 0.0;
    SparseLabels labels{{{0, 0}, {1, 1}}};
    const auto result = seg_loss(logits, labels);
    CHECK(result.value < 1e-10);
}

TEST_CASE("seg loss of a uniform prediction is ln C") {
    const Mat logits = Mat::Zero(3, 4);
    SparseLabels labels{{{1, 2}}};
    const auto result = seg_loss(logits, labels);
    CHECK(result.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("seg loss with no labels is exactly zero") {
    const Mat logits = Mat::Random(4, 3);
    const auto result = seg_loss(logits, SparseLabels{});
    CHECK(result.value == 0.0);
    CHECK(result.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("seg loss rejects out-of-range classes") {
    const Mat logits = Mat::Zero(2, 2);
    CHECK_THROWS_AS(seg_loss(logits, SparseLabels{{{0, 5}}}), ArgumentError);
    CHECK_THROWS_AS(seg_loss(logits, SparseLabels{{{7, 0}}}), ArgumentError);
}

TEST_CASE("seg loss gradient matches finite differences") {
    std::mt19937_64 rng(71);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 6, c = 4;
        Mat logits = oracles::random_logits(n, c, rng);
        SparseLabels labels;
        std::uniform_int_distribution<std::int64_t> cls(0, c - 1);
        labels.entries = {{0, cls(rng)}, {2, cls(rng)}, {5, cls(rng)}};
        const auto result = seg_loss(logits, labels);
        check_gradient(logits, result.grad,
                       [&](const Mat& l) { return seg_loss(l, labels).value; }, 1e-5);
    }
}

TEST_CASE("reliable loss conventions") {
    std::mt19937_64 rng(72);
    const Eigen::Index n = 5, c = 3;
    const Mat one_hot = random_one_hot(n, c, rng);

    SUBCASE("empty mask gives exactly zero") {
        const std::vector<Mat> logits = {oracles::random_logits(n, c, rng)};
        const auto result = reliable_loss(one_hot, full_mask(n, false), logits);
        CHECK(result.value == 0.0);
        CHECK(result.grads[0].cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("perfect agreement gives near-zero loss") {
        Mat logits = Mat::Zero(n, c);
        Mask mask = full_mask(n, false);
        mask[1] = 1;
        Eigen::Index y = 0;
        one_hot.row(1).maxCoeff(&y);
        logits(1, y) = 40.0;
        const auto result = reliable_loss(one_hot, mask, {logits});
        CHECK(result.value < 1e-10);
    }

    SUBCASE("matches a literal per-view per-point loop") {
        const std::vector<Mat> logits = {oracles::random_logits(n, c, rng),
                                         oracles::random_logits(n, c, rng)};
        const Mask mask = random_mask(n, rng);
        const auto result = reliable_loss(one_hot, mask, logits);

        double expected = 0.0;
        long selected = 0;
        for (const auto m : mask) selected += m;
        if (selected > 0) {
            for (const auto& view : logits) {
                const Mat probs = softmax_rows(view);
                double view_loss = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    if (!mask[static_cast<std::size_t>(i)]) continue;
                    for (Eigen::Index j = 0; j < c; ++j)
                        if (one_hot(i, j) == 1.0) view_loss += -std::log(probs(i, j));
                }
                expected += view_loss / static_cast<double>(selected);
            }
        }
        CHECK(result.value == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("reliable loss gradient matches finite differences") {
    std::mt19937_64 rng(73);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 6, c = 3;
        const Mat one_hot = random_one_hot(n, c, rng);
        Mask mask = random_mask(n, rng);
        mask[0] = 1;
        std::vector<Mat> logits = {oracles::random_logits(n, c, rng),
                                   oracles::random_logits(n, c, rng)};
        const auto result = reliable_loss(one_hot, mask, logits);
        for (std::size_t k = 0; k < logits.size(); ++k)
            check_gradient(logits[k], result.grads[k],
                           [&](const Mat& l) {
                               auto views = logits;
                               views[k] = l;
                               return reliable_loss(one_hot, mask, views).value;
                           },
                           1e-5);
    }
}

TEST_CASE("ambiguous loss is zero when target equals prediction") {
    Mat logits(2, 2);
    logits << 0.0, 0.0, 1.0, -1.0;
    const Mat target = softmax_rows(logits);
    const auto result = ambiguous_loss(target, full_mask(2, true), {logits});
    CHECK(result.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(result.grads[0].cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ambiguous loss on a one-hot target against uniform prediction is ln 2") {
    Mat target(1, 2);
    target << 1.0, 0.0;
    const Mat logits = Mat::Zero(1, 2);
    const auto one_view = ambiguous_loss(target, full_mask(1, true), {logits});
    CHECK(one_view.value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    const auto two_views = ambiguous_loss(target, full_mask(1, true), {logits, logits});
    CHECK(two_views.value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("ambiguous loss is nonnegative and zero on the empty set") {
    std::mt19937_64 rng(74);
    const auto empty = ambiguous_loss(oracles::random_prob_matrix(3, 2, rng),
                                      full_mask(3, false), {Mat::Zero(3, 2)});
    CHECK(empty.value == 0.0);
    for (int trial = 0; trial < 30; ++trial) {
        const Mat target = oracles::random_prob_matrix(5, 3, rng);
        const Mat logits = oracles::random_logits(5, 3, rng);
        const auto result = ambiguous_loss(target, random_mask(5, rng), {logits});
        CHECK(result.value >= 0.0);
    }
}

TEST_CASE("ambiguous loss gradient matches finite differences") {
    std::mt19937_64 rng(75);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 5, c = 4;
        const Mat target = oracles::random_prob_matrix(n, c, rng);
        Mask mask = random_mask(n, rng);
        mask[2] = 1;
        std::vector<Mat> logits = {oracles::random_logits(n, c, rng)};
        const auto result = ambiguous_loss(target, mask, logits);
        check_gradient(logits[0], result.grads[0],
                       [&](const Mat& l) { return ambiguous_loss(target, mask, {l}).value; },
                       1e-5);
    }
}

TEST_CASE("perturbing the soft target changes the value but grads stay w.r.t. logits") {
    std::mt19937_64 rng(76);
    const Mat target = oracles::random_prob_matrix(4, 3, rng);
    const Mat logits = oracles::random_logits(4, 3, rng);
    const Mask mask = full_mask(4, true);
    const auto base = ambiguous_loss(target, mask, {logits});

    Mat shifted = target;
    shifted(1, 0) += 0.05;
    shifted(1, 1) -= 0.05;
    const auto moved = ambiguous_loss(shifted, mask, {logits});
    CHECK(moved.value != base.value);
    // The gradient stays (p - t)/|A| per row: exactly the closed form.
    const Mat probs = softmax_rows(logits);
    const Mat expected = (probs - shifted) / 4.0;
    CHECK((moved.grads[0] - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mix loss basics and structural identity with reliable loss") {
    std::mt19937_64 rng(77);
    const Eigen::Index n = 6, c = 3;
    const Mat one_hot = random_one_hot(n, c, rng);
    const Mat logits = oracles::random_logits(n, c, rng);
    const Mask mask = random_mask(n, rng);

    const auto empty = mix_loss(one_hot, full_mask(n, false), logits);
    CHECK(empty.value == 0.0);
    CHECK(empty.grad.cwiseAbs().maxCoeff() == 0.0);

    // K=1 reliable loss on the same view is the same computation.
    const auto mix = mix_loss(one_hot, mask, logits);
    const auto rel = reliable_loss(one_hot, mask, {logits});
    CHECK(mix.value == rel.value);
    CHECK(mix.grad == rel.grads[0]);
}

TEST_CASE("mix loss gradient matches finite differences") {
    std::mt19937_64 rng(78);
    const Eigen::Index n = 5, c = 3;
    const Mat one_hot = random_one_hot(n, c, rng);
    Mask mask = random_mask(n, rng);
    mask[0] = 1;
    Mat logits = oracles::random_logits(n, c, rng);
    const auto result = mix_loss(one_hot, mask, logits);
    check_gradient(logits, result.grad,
                   [&](const Mat& l) { return mix_loss(one_hot, mask, l).value; }, 1e-5);
}

TEST_CASE("total loss arithmetic") {
    CHECK(total_loss(1, 2, 3, 4, 1, 1, 1) == 10.0);
    CHECK(total_loss(0, 2, 0, 0, 0.5, 1, 1) == 1.0);
}

TEST_CASE("total loss with unit weights equals the plain sum bit-exactly") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        CHECK(total_loss(a, b, c, d, 1.0, 1.0, 1.0) == a + 1.0 * b + 1.0 * c + 1.0 * d);
    }
}

TEST_CASE("lambda sweep grid is expressible") {
    for (const double l1 : {0.5, 1.0})
        for (const double l2 : {0.5, 1.0})
            for (const double l3 : {0.5, 1.0}) {
                const double total = total_loss(1.0, 1.0, 1.0, 1.0, l1, l2, l3);
                CHECK(total == doctest::Approx(1.0 + l1 + l2 + l3));
            }
}

TEST_CASE("dice loss agreement and gradient") {
    SUBCASE("perfect one-hot agreement is zero up to smoothing") {
        // Two points, both labeled class 0, prediction driven to one-hot.
        Mat one_hot = Mat::Zero(2, 2);
        one_hot(0, 0) = 1.0;
        one_hot(1, 0) = 1.0;
        Mat logits(2, 2);
        logits << 45.0, 0.0, 45.0, 0.0;
        const auto result = dice_loss(one_hot, full_mask(2, true), {logits});
        // class0: 1 - (2*2+1)/(2+2+1) = 0; class1: 1 - 1/1 = 0.
        CHECK(result.value == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("empty mask gives zero") {
        const auto result = dice_loss(Mat::Zero(3, 2), full_mask(3, false), {Mat::Zero(3, 2)});
        CHECK(result.value == 0.0);
    }

    SUBCASE("gradients match finite differences") {
        std::mt19937_64 rng(80);
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::Index n = 5, c = 3;
            const Mat one_hot = random_one_hot(n, c, rng);
            Mask mask = random_mask(n, rng);
            mask[1] = 1;
            Mat logits = oracles::random_logits(n, c, rng);
            const auto result = dice_loss(one_hot, mask, {logits});
            check_gradient(logits, result.grads[0],
                           [&](const Mat& l) { return dice_loss(one_hot, mask, {l}).value; },
                           1e-5);
        }
    }
}

TEST_CASE("mse loss agreement and gradient") {
    SUBCASE("target equal to prediction gives zero") {
        Mat logits(2, 3);
        logits << 0.5, -0.5, 1.0, 0.0, 0.0, 0.0;
        const Mat target = softmax_rows(logits);
        const auto result = mse_loss(target, full_mask(2, true), {logits});
        CHECK(result.value == doctest::Approx(0.0).epsilon(1e-15));
    }

    SUBCASE("gradients match finite differences") {
        std::mt19937_64 rng(81);
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::Index n = 4, c = 4;
            const Mat target = oracles::random_prob_matrix(n, c, rng);
            Mask mask = random_mask(n, rng);
            mask[3] = 1;
            Mat logits = oracles::random_logits(n, c, rng);
            const auto result = mse_loss(target, mask, {logits});
            check_gradient(logits, result.grads[0],
                           [&](const Mat& l) { return mse_loss(target, mask, {l}).value; },
                           1e-5);
        }
    }
}

TEST_CASE("losses are permutation-equivariant over points") {
    std::mt19937_64 rng(82);
    const Eigen::Index n = 8, c = 3;
    const Mat one_hot = random_one_hot(n, c, rng);
    const Mat soft = oracles::random_prob_matrix(n, c, rng);
    const Mask mask = random_mask(n, rng);
    const Mat logits = oracles::random_logits(n, c, rng);

    std::vector<Eigen::Index> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    Mat one_hot_p(n, c), soft_p(n, c), logits_p(n, c);
    Mask mask_p(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        one_hot_p.row(i) = one_hot.row(perm[static_cast<std::size_t>(i)]);
        soft_p.row(i) = soft.row(perm[static_cast<std::size_t>(i)]);
        logits_p.row(i) = logits.row(perm[static_cast<std::size_t>(i)]);
        mask_p[static_cast<std::size_t>(i)] =
            mask[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    Mask inv_mask(static_cast<std::size_t>(n)), inv_mask_p(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        inv_mask[i] = mask[i] ? 0 : 1;
        inv_mask_p[i] = mask_p[i] ? 0 : 1;
    }

    CHECK(reliable_loss(one_hot, mask, {logits}).value ==
          doctest::Approx(reliable_loss(one_hot_p, mask_p, {logits_p}).value).epsilon(1e-12));
    CHECK(ambiguous_loss(soft, inv_mask, {logits}).value ==
          doctest::Approx(ambiguous_loss(soft_p, inv_mask_p, {logits_p}).value).epsilon(1e-12));
    CHECK(mix_loss(one_hot, mask, logits).value ==
          doctest::Approx(mix_loss(one_hot_p, mask_p, logits_p).value).epsilon(1e-12));
    CHECK(dice_loss(one_hot, mask, {logits}).value ==
          doctest::Approx(dice_loss(one_hot_p, mask_p, {logits_p}).value).epsilon(1e-12));
    CHECK(mse_loss(soft, inv_mask, {logits}).value ==
          doctest::Approx(mse_loss(soft_p, inv_mask_p, {logits_p}).value).epsilon(1e-12));
}
