#include "racseg/losses.hpp"

#include <cmath>

namespace racseg {

namespace {

double safe_log(double x) { return std::log(std::max(x, kLogEps)); }

long count_selected(const Mask& mask) {
    long n = 0;
    for (const auto m : mask) n += m ? 1 : 0;
    return n;
}

void check_mask_shape(const Mask& mask, const Mat& m, const char* what) {
    if (mask.size() != static_cast<std::size_t>(m.rows()))
        throw ArgumentError(std::string(what) + ": mask length does not match rows");
}

/// dL/dlogits for a row-wise softmax given dL/dp.
Mat softmax_backward(const Mat& probs, const Mat& grad_probs) {
    Mat out(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const double dot = probs.row(i).dot(grad_probs.row(i));
        out.row(i) =
            probs.row(i).array() * (grad_probs.row(i).array() - dot);
    }
    return out;
}

}  // namespace

Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

LossValueGrad seg_loss(const Mat& logits, const SparseLabels& labels) {
    LossValueGrad result;
    result.grad = Mat::Zero(logits.rows(), logits.cols());
    if (labels.entries.empty()) return result;

    labels.validate(logits.rows(), logits.cols());
    const Mat probs = softmax_rows(logits);
    const double inv_m = 1.0 / static_cast<double>(labels.entries.size());
    double loss = 0.0;
    for (const auto& e : labels.entries) {
        const auto i = static_cast<Eigen::Index>(e.point_index);
        const auto y = static_cast<Eigen::Index>(e.class_id);
        loss += -safe_log(probs(i, y));
        result.grad.row(i) = probs.row(i) * inv_m;
        result.grad(i, y) -= inv_m;
    }
    result.value = loss * inv_m;
    return result;
}

LossValueGrads reliable_loss(const Mat& one_hot, const Mask& mask,
                             const std::vector<Mat>& aug_logits) {
    if (aug_logits.empty()) throw ArgumentError("reliable_loss: no augmented views");
    check_mask_shape(mask, one_hot, "reliable_loss");

    LossValueGrads result;
    const long selected = count_selected(mask);
    for (const auto& logits : aug_logits) {
        if (logits.rows() != one_hot.rows() || logits.cols() != one_hot.cols())
            throw ArgumentError("reliable_loss: logits shape mismatch");
        if (selected == 0) {
            result.grads.push_back(Mat::Zero(logits.rows(), logits.cols()));
            continue;
        }
        const Mat probs = softmax_rows(logits);
        const double inv = 1.0 / static_cast<double>(selected);
        Mat grad = Mat::Zero(logits.rows(), logits.cols());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            Eigen::Index y = 0;
            one_hot.row(i).maxCoeff(&y);
            loss += -safe_log(probs(i, y));
            grad.row(i) = (probs.row(i) - one_hot.row(i)) * inv;
        }
        result.value += loss * inv;
        result.grads.push_back(std::move(grad));
    }
    return result;
}

LossValueGrads ambiguous_loss(const Mat& soft, const Mask& selected,
                              const std::vector<Mat>& aug_logits) {
    if (aug_logits.empty()) throw ArgumentError("ambiguous_loss: no augmented views");
    check_mask_shape(selected, soft, "ambiguous_loss");

    LossValueGrads result;
    const long count = count_selected(selected);
    for (const auto& logits : aug_logits) {
        if (logits.rows() != soft.rows() || logits.cols() != soft.cols())
            throw ArgumentError("ambiguous_loss: logits shape mismatch");
        if (count == 0) {
            result.grads.push_back(Mat::Zero(logits.rows(), logits.cols()));
            continue;
        }
        const Mat probs = softmax_rows(logits);
        const double inv = 1.0 / static_cast<double>(count);
        Mat grad = Mat::Zero(logits.rows(), logits.cols());
        double loss = 0.0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            if (!selected[static_cast<std::size_t>(i)]) continue;
            // True KL (entropy term included) so the value is >= 0; the
            // gradient w.r.t. logits is still p - t.
            for (Eigen::Index c = 0; c < logits.cols(); ++c) {
                const double t = soft(i, c);
                if (t > 0.0) loss += t * (safe_log(t) - safe_log(probs(i, c)));
            }
            grad.row(i) = (probs.row(i) - soft.row(i)) * inv;
        }
        result.value += loss * inv;
        result.grads.push_back(std::move(grad));
    }
    return result;
}

LossValueGrad mix_loss(const Mat& one_hot, const Mask& mask, const Mat& mix_logits) {
    if (mix_logits.rows() != one_hot.rows() || mix_logits.cols() != one_hot.cols())
        throw ArgumentError("mix_loss: logits shape mismatch");
    check_mask_shape(mask, one_hot, "mix_loss");

    LossValueGrad result;
    result.grad = Mat::Zero(mix_logits.rows(), mix_logits.cols());
    const long selected = count_selected(mask);
    if (selected == 0) return result;

    const Mat probs = softmax_rows(mix_logits);
    const double inv = 1.0 / static_cast<double>(selected);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < mix_logits.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        Eigen::Index y = 0;
        one_hot.row(i).maxCoeff(&y);
        loss += -safe_log(probs(i, y));
        result.grad.row(i) = (probs.row(i) - one_hot.row(i)) * inv;
    }
    result.value = loss * inv;
    return result;
}

double total_loss(double seg, double reliable, double ambiguous, double mix, double lambda1,
                  double lambda2, double lambda3) {
    return seg + lambda1 * reliable + lambda2 * ambiguous + lambda3 * mix;
}

LossValueGrads dice_loss(const Mat& one_hot, const Mask& mask,
                         const std::vector<Mat>& aug_logits) {
    if (aug_logits.empty()) throw ArgumentError("dice_loss: no augmented views");
    check_mask_shape(mask, one_hot, "dice_loss");
    constexpr double kSmooth = 1.0;

    LossValueGrads result;
    const long selected = count_selected(mask);
    const Eigen::Index n_classes = one_hot.cols();
    for (const auto& logits : aug_logits) {
        if (logits.rows() != one_hot.rows() || logits.cols() != one_hot.cols())
            throw ArgumentError("dice_loss: logits shape mismatch");
        if (selected == 0) {
            result.grads.push_back(Mat::Zero(logits.rows(), logits.cols()));
            continue;
        }
        const Mat probs = softmax_rows(logits);
        Vec numer = Vec::Constant(n_classes, kSmooth);
        Vec denom = Vec::Constant(n_classes, kSmooth);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            for (Eigen::Index c = 0; c < n_classes; ++c) {
                numer(c) += 2.0 * probs(i, c) * one_hot(i, c);
                denom(c) += probs(i, c) * probs(i, c) + one_hot(i, c) * one_hot(i, c);
            }
        }
        double loss = 0.0;
        for (Eigen::Index c = 0; c < n_classes; ++c) loss += 1.0 - numer(c) / denom(c);
        loss /= static_cast<double>(n_classes);
        result.value += loss;

        Mat grad_probs = Mat::Zero(logits.rows(), n_classes);
        const double inv_c = 1.0 / static_cast<double>(n_classes);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            if (!mask[static_cast<std::size_t>(i)]) continue;
            for (Eigen::Index c = 0; c < n_classes; ++c) {
                const double d = denom(c);
                grad_probs(i, c) =
                    inv_c * (-2.0 * one_hot(i, c) * d + numer(c) * 2.0 * probs(i, c)) / (d * d);
            }
        }
        result.grads.push_back(softmax_backward(probs, grad_probs));
    }
    return result;
}

LossValueGrads mse_loss(const Mat& soft, const Mask& selected,
                        const std::vector<Mat>& aug_logits) {
    if (aug_logits.empty()) throw ArgumentError("mse_loss: no augmented views");
    check_mask_shape(selected, soft, "mse_loss");

    LossValueGrads result;
    const long count = count_selected(selected);
    const Eigen::Index n_classes = soft.cols();
    for (const auto& logits : aug_logits) {
        if (logits.rows() != soft.rows() || logits.cols() != soft.cols())
            throw ArgumentError("mse_loss: logits shape mismatch");
        if (count == 0) {
            result.grads.push_back(Mat::Zero(logits.rows(), logits.cols()));
            continue;
        }
        const Mat probs = softmax_rows(logits);
        const double inv = 1.0 / static_cast<double>(count * n_classes);
        Mat grad_probs = Mat::Zero(logits.rows(), n_classes);
        double loss = 0.0;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            if (!selected[static_cast<std::size_t>(i)]) continue;
            for (Eigen::Index c = 0; c < n_classes; ++c) {
                const double diff = probs(i, c) - soft(i, c);
                loss += diff * diff;
                grad_probs(i, c) = 2.0 * diff * inv;
            }
        }
        result.value += loss * inv;
        result.grads.push_back(softmax_backward(probs, grad_probs));
    }
    return result;
}

}  // namespace racseg
