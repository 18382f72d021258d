#pragma once

#include <array>
#include <utility>
#include <vector>

#include "racseg/pointcloud.hpp"

namespace racseg {

// Every loss consumes raw logits for the branch being trained and converts
// them to probabilities internally; targets are constants and receive no
// gradient. Log arguments are clamped below at kLogEps.
inline constexpr double kLogEps = 1e-12;

struct LossValueGrad {
    double value = 0.0;
    Mat grad;  // N x C, w.r.t. the logits
};

struct LossValueGrads {
    double value = 0.0;
    std::vector<Mat> grads;  // one N x C gradient per view
};

/// Per-branch result of one training iteration. total is computed as
/// seg + l1*reliable + l2*ambiguous + l3*mix, in exactly that order.
struct LossReport {
    double seg = 0.0;
    double reliable = 0.0;
    double ambiguous = 0.0;
    double mix = 0.0;
    double total = 0.0;
    std::array<double, 3> lambdas{1.0, 1.0, 1.0};
    Mat grad_original;            // seg gradient, N x C
    std::vector<Mat> grads_augmented;  // K matrices
    Mat grad_mix;
};

/// Row-wise softmax with max subtraction.
Mat softmax_rows(const Mat& logits);

/// Mean cross entropy over the labeled points; zero (with zero grad) when no
/// point is labeled.
LossValueGrad seg_loss(const Mat& logits, const SparseLabels& labels);

/// Sum over the K views of the mean cross entropy between the one-hot pseudo
/// labels and each view's prediction, restricted to masked points.
LossValueGrads reliable_loss(const Mat& one_hot, const Mask& mask,
                             const std::vector<Mat>& aug_logits);

/// Sum over the K views of the mean KL divergence from the soft pseudo labels
/// to each view's prediction, restricted to points where selected is true.
/// Callers pass the complement of the reliable mask.
LossValueGrads ambiguous_loss(const Mat& soft, const Mask& selected,
                              const std::vector<Mat>& aug_logits);

/// Mean cross entropy between the one-hot pseudo labels and the mix-view
/// prediction over masked points.
LossValueGrad mix_loss(const Mat& one_hot, const Mask& mask, const Mat& mix_logits);

double total_loss(double seg, double reliable, double ambiguous, double mix,
                  double lambda1, double lambda2, double lambda3);

/// Dice alternative to reliable_loss: per class 1 - (2*sum(p*y)+s)/(sum(p^2)+sum(y^2)+s)
/// over masked points, averaged over classes, smoothing s = 1.
LossValueGrads dice_loss(const Mat& one_hot, const Mask& mask,
                         const std::vector<Mat>& aug_logits);

/// MSE alternative to ambiguous_loss: mean squared difference of probability
/// rows over selected points.
LossValueGrads mse_loss(const Mat& soft, const Mask& selected,
                        const std::vector<Mat>& aug_logits);

}  // namespace racseg
