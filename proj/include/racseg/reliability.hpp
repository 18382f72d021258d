#pragma once

#include <vector>

#include "racseg/common.hpp"

namespace racseg {

/// The original prediction, its K augmented-view counterparts, and the
/// per-entry mean and deviation over all K+1 views. Every row of every
/// probability matrix sums to 1 within 1e-9.
struct PredictionBundle {
    Mat original;                 // N x C
    std::vector<Mat> augmented;   // K matrices, N x C
    Mat mean;                     // N x C
    Mat deviation;                // N x C, entries >= 0
};

/// Reliable/ambiguous split of a scene's points.
///
/// mask[i] is true exactly when some class is simultaneously confident
/// (mean >= tau) and stable (deviation <= kappa). Reliable rows of one_hot
/// carry the argmax of the original prediction; ambiguous rows of soft carry
/// the original prediction itself. Rows on the other side of the split are
/// zero.
struct ReliabilityPartition {
    Mask mask;      // length N
    Mat one_hot;    // N x C
    Mat soft;       // N x C
    double tau = 0.0;
    double kappa = 0.0;

    long reliable_count() const;
};

/// Elementwise arithmetic mean over the K+1 prediction views.
Mat mean_prediction(const Mat& original, const std::vector<Mat>& augmented);

/// Elementwise population standard deviation over the K+1 views:
/// sqrt(sum_views (P_view - mean)^2 / (K+1)).
Mat uncertainty(const Mat& original, const std::vector<Mat>& augmented, const Mat& mean);

/// Convenience constructor running mean_prediction and uncertainty.
PredictionBundle make_bundle(Mat original, std::vector<Mat> augmented);

ReliabilityPartition partition(const Mat& original, const Mat& mean, const Mat& deviation,
                               double tau, double kappa);

}  // namespace racseg
