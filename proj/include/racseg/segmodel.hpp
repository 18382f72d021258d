#pragma once

#include <cstdint>
#include <string>

#include "racseg/pointcloud.hpp"

namespace racseg {

/// Per-point segmentation network: a two-layer point encoder, one
/// neighborhood max-pool aggregation stage, and a linear classifier head.
///
///   X0 = [standardized locations | features]          N x (3+D_f)
///   H1 = relu(X0 W1 + b1), H2 = relu(H1 W2 + b2)      N x h
///   A_i = max_{j in nb(i)} H2_j                       N x h
///   H3 = relu([H2 | A] W3 + b3)                       N x h
///   logits = H3 W4 + b4                               N x C
struct ModelParams {
    Mat w1; Vec b1;   // (3+D_f) x h
    Mat w2; Vec b2;   // h x h
    Mat w3; Vec b3;   // 2h x h
    Mat w4; Vec b4;   // h x C

    Eigen::Index input_dim() const { return w1.rows(); }
    Eigen::Index hidden() const { return w1.cols(); }
    Eigen::Index n_classes() const { return w4.cols(); }
};

struct ParamGrads {
    Mat w1; Vec b1;
    Mat w2; Vec b2;
    Mat w3; Vec b3;
    Mat w4; Vec b4;

    static ParamGrads zeros_like(const ModelParams& p);
    ParamGrads& operator+=(const ParamGrads& other);
    ParamGrads& operator*=(double s);
    bool all_finite() const;
};

/// Activations captured by forward for exact backpropagation.
struct ForwardTape {
    Mat x0, z1, h1, z2, h2, z3, h3;
    IndexMat pool_argmax;  // N x h, source row of each pooled max
    ModelParams params;    // weights used by this pass
    bool valid = false;
};

/// Glorot-uniform initialization, deterministic per seed.
ModelParams init_params(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index n_classes,
                        std::uint64_t seed);

std::pair<Mat, ForwardTape> forward(const ModelParams& params, const PointCloud& cloud,
                                    const IndexMat& neighbors);

/// Exact gradients of sum_ic grad_logits[i,c] * logits[i,c] w.r.t. params.
ParamGrads backward(const ForwardTape& tape, const Mat& grad_logits);

/// SGD with classical momentum.
struct TrainState {
    ModelParams params;
    ParamGrads momentum;  // velocity buffers, shape-matched to params
    long step = 0;
    double learning_rate = 0.01;
    double momentum_coeff = 0.9;
};

TrainState make_train_state(ModelParams params, double learning_rate, double momentum_coeff);

/// buf <- mu*buf + g; w <- w - lr*buf. Throws TrainingError on non-finite grads.
TrainState sgd_step(const TrainState& state, const ParamGrads& grads);

/// Row-wise softmax (max-subtracted).
Mat probabilities(const Mat& logits);

/// Checkpoint: magic "RACCKPT1", u64 input_dim/hidden/n_classes/k_neighbors,
/// then the parameter blobs as little-endian f64 in fixed order.
void save_checkpoint(const ModelParams& params, int k_neighbors, const std::string& path);
std::pair<ModelParams, int> load_checkpoint(const std::string& path);

}  // namespace racseg
