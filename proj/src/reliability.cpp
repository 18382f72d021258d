#include "racseg/reliability.hpp"

#include <cmath>

namespace racseg {

namespace {

constexpr double kRowSumTol = 1e-9;

void check_probability_matrix(const Mat& m, const char* what) {
    if ((m.array() < 0.0).any())
        throw ArgumentError(std::string(what) + ": negative probability entry");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double s = m.row(i).sum();
        if (std::abs(s - 1.0) > kRowSumTol)
            throw ArgumentError(std::string(what) + ": row " + std::to_string(i) +
                                " sums to " + std::to_string(s));
    }
}

void check_shapes(const Mat& original, const std::vector<Mat>& augmented) {
    if (augmented.empty()) throw ArgumentError("prediction bundle needs K >= 1 augmented views");
    for (const auto& a : augmented)
        if (a.rows() != original.rows() || a.cols() != original.cols())
            throw ArgumentError("prediction view shape mismatch");
}

}  // namespace

long ReliabilityPartition::reliable_count() const {
    long count = 0;
    for (const auto m : mask) count += m ? 1 : 0;
    return count;
}

Mat mean_prediction(const Mat& original, const std::vector<Mat>& augmented) {
    check_shapes(original, augmented);
    check_probability_matrix(original, "mean_prediction original");
    for (const auto& a : augmented) check_probability_matrix(a, "mean_prediction augmented");

    Mat acc = original;
    for (const auto& a : augmented) acc += a;
    return acc / static_cast<double>(augmented.size() + 1);
}

Mat uncertainty(const Mat& original, const std::vector<Mat>& augmented, const Mat& mean) {
    check_shapes(original, augmented);
    if (mean.rows() != original.rows() || mean.cols() != original.cols())
        throw ArgumentError("uncertainty: mean shape mismatch");

    Mat acc = (original - mean).array().square();
    for (const auto& a : augmented) acc.array() += (a - mean).array().square();
    return (acc / static_cast<double>(augmented.size() + 1)).array().sqrt();
}

PredictionBundle make_bundle(Mat original, std::vector<Mat> augmented) {
    Mat mean = mean_prediction(original, augmented);
    Mat dev = uncertainty(original, augmented, mean);
    return PredictionBundle{std::move(original), std::move(augmented), std::move(mean),
                            std::move(dev)};
}

ReliabilityPartition partition(const Mat& original, const Mat& mean, const Mat& deviation,
                               double tau, double kappa) {
    if (!(tau > 0.0 && tau < 1.0))
        throw ArgumentError("partition: tau must lie in (0, 1)");
    if (!(kappa >= 0.0)) throw ArgumentError("partition: kappa must be >= 0");
    if (mean.rows() != original.rows() || mean.cols() != original.cols() ||
        deviation.rows() != original.rows() || deviation.cols() != original.cols())
        throw ArgumentError("partition: shape mismatch");

    const Eigen::Index n = original.rows(), c = original.cols();
    ReliabilityPartition part;
    part.tau = tau;
    part.kappa = kappa;
    part.mask.assign(static_cast<std::size_t>(n), 0);
    part.one_hot = Mat::Zero(n, c);
    part.soft = Mat::Zero(n, c);

    for (Eigen::Index i = 0; i < n; ++i) {
        bool reliable = false;
        for (Eigen::Index j = 0; j < c; ++j) {
            // Confidence and stability must hold for the same class.
            if (mean(i, j) >= tau && deviation(i, j) <= kappa) {
                reliable = true;
                break;
            }
        }
        if (reliable) {
            part.mask[static_cast<std::size_t>(i)] = 1;
            Eigen::Index best = 0;
            for (Eigen::Index j = 1; j < c; ++j)
                if (original(i, j) > original(i, best)) best = j;
            part.one_hot(i, best) = 1.0;
        } else {
            part.soft.row(i) = original.row(i);
        }
    }
    return part;
}

}  // namespace racseg
