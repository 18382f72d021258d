#include "racseg/segmodel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace racseg {

namespace {

constexpr char kCheckpointMagic[8] = {'R', 'A', 'C', 'C', 'K', 'P', 'T', '1'};

Mat glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

Mat relu(const Mat& z) { return z.cwiseMax(0.0); }

/// Locations centered on the centroid and divided by the largest bounding-box
/// dimension; features pass through unchanged.
Mat standardized_input(const PointCloud& cloud) {
    const Mat& loc = cloud.locations();
    const Eigen::RowVector3d center = loc.colwise().mean();
    const Eigen::RowVector3d span = loc.colwise().maxCoeff() - loc.colwise().minCoeff();
    const double scale = std::max(span.maxCoeff(), 1e-9);

    Mat x0(loc.rows(), 3 + cloud.feature_dim());
    x0.leftCols<3>() = (loc.rowwise() - center) / scale;
    if (cloud.feature_dim() > 0) x0.rightCols(cloud.feature_dim()) = cloud.features();
    return x0;
}

void write_mat(std::ofstream& out, const Mat& m, const std::string& path) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    if (!out) throw IoError("checkpoint write failure: " + path);
}

Mat read_mat(std::ifstream& in, Eigen::Index rows, Eigen::Index cols, const std::string& path) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            double v = 0.0;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            if (!in) throw ParseError("truncated checkpoint: " + path);
            m(i, j) = v;
        }
    return m;
}

}  // namespace

ParamGrads ParamGrads::zeros_like(const ModelParams& p) {
    ParamGrads g;
    g.w1 = Mat::Zero(p.w1.rows(), p.w1.cols());
    g.b1 = Vec::Zero(p.b1.size());
    g.w2 = Mat::Zero(p.w2.rows(), p.w2.cols());
    g.b2 = Vec::Zero(p.b2.size());
    g.w3 = Mat::Zero(p.w3.rows(), p.w3.cols());
    g.b3 = Vec::Zero(p.b3.size());
    g.w4 = Mat::Zero(p.w4.rows(), p.w4.cols());
    g.b4 = Vec::Zero(p.b4.size());
    return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& o) {
    w1 += o.w1; b1 += o.b1;
    w2 += o.w2; b2 += o.b2;
    w3 += o.w3; b3 += o.b3;
    w4 += o.w4; b4 += o.b4;
    return *this;
}

ParamGrads& ParamGrads::operator*=(double s) {
    w1 *= s; b1 *= s;
    w2 *= s; b2 *= s;
    w3 *= s; b3 *= s;
    w4 *= s; b4 *= s;
    return *this;
}

bool ParamGrads::all_finite() const {
    return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() &&
           w3.allFinite() && b3.allFinite() && w4.allFinite() && b4.allFinite();
}

ModelParams init_params(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index n_classes,
                        std::uint64_t seed) {
    if (input_dim < 3 || hidden < 1 || n_classes < 2)
        throw ArgumentError("init_params: invalid model dimensions");
    std::mt19937_64 rng(seed);
    ModelParams p;
    p.w1 = glorot(input_dim, hidden, rng);
    p.b1 = Vec::Zero(hidden);
    p.w2 = glorot(hidden, hidden, rng);
    p.b2 = Vec::Zero(hidden);
    p.w3 = glorot(2 * hidden, hidden, rng);
    p.b3 = Vec::Zero(hidden);
    p.w4 = glorot(hidden, n_classes, rng);
    p.b4 = Vec::Zero(n_classes);
    return p;
}

std::pair<Mat, ForwardTape> forward(const ModelParams& params, const PointCloud& cloud,
                                    const IndexMat& neighbors) {
    if (neighbors.rows() != cloud.n_points())
        throw ArgumentError("forward: neighbor rows do not match cloud");
    if (params.input_dim() != 3 + cloud.feature_dim())
        throw ArgumentError("forward: model input dim does not match cloud features");

    const Eigen::Index n = cloud.n_points();
    const Eigen::Index h = params.hidden();
    const int k = static_cast<int>(neighbors.cols());

    ForwardTape tape;
    tape.x0 = standardized_input(cloud);
    tape.z1 = (tape.x0 * params.w1).rowwise() + params.b1.transpose();
    tape.h1 = relu(tape.z1);
    tape.z2 = (tape.h1 * params.w2).rowwise() + params.b2.transpose();
    tape.h2 = relu(tape.z2);

    // Neighborhood max-pool; the winning source row is kept for backprop.
    Mat pooled(n, h);
    tape.pool_argmax.resize(n, h);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index f = 0; f < h; ++f) {
            std::int32_t best = neighbors(i, 0);
            double best_v = tape.h2(best, f);
            for (int c = 1; c < k; ++c) {
                const std::int32_t j = neighbors(i, c);
                if (tape.h2(j, f) > best_v) {
                    best_v = tape.h2(j, f);
                    best = j;
                }
            }
            pooled(i, f) = best_v;
            tape.pool_argmax(i, f) = best;
        }
    }

    Mat cat(n, 2 * h);
    cat.leftCols(h) = tape.h2;
    cat.rightCols(h) = pooled;
    tape.z3 = (cat * params.w3).rowwise() + params.b3.transpose();
    tape.h3 = relu(tape.z3);
    Mat logits = (tape.h3 * params.w4).rowwise() + params.b4.transpose();

    tape.params = params;
    tape.valid = true;
    return {std::move(logits), std::move(tape)};
}

ParamGrads backward(const ForwardTape& tape, const Mat& grad_logits) {
    if (!tape.valid) throw ArgumentError("backward: tape does not come from a forward pass");
    if (grad_logits.rows() != tape.h3.rows() || grad_logits.cols() != tape.params.n_classes())
        throw ArgumentError("backward: grad_logits shape does not match the tape");

    const Eigen::Index n = tape.x0.rows();
    const Eigen::Index h = tape.params.hidden();
    const ModelParams& p = tape.params;
    ParamGrads g = ParamGrads::zeros_like(p);

    g.w4.noalias() = tape.h3.transpose() * grad_logits;
    g.b4 = grad_logits.colwise().sum();
    Mat d3 = (grad_logits * p.w4.transpose()).cwiseProduct(
        (tape.z3.array() > 0.0).cast<double>().matrix());

    Mat cat(n, 2 * h);
    cat.leftCols(h) = tape.h2;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index f = 0; f < h; ++f) cat(i, h + f) = tape.h2(tape.pool_argmax(i, f), f);

    g.w3.noalias() = cat.transpose() * d3;
    g.b3 = d3.colwise().sum();
    Mat dcat = d3 * p.w3.transpose();

    // Route the pooled half of the gradient back to the winning rows.
    Mat dh2 = dcat.leftCols(h);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index f = 0; f < h; ++f) dh2(tape.pool_argmax(i, f), f) += dcat(i, h + f);

    Mat d2 = dh2.cwiseProduct((tape.z2.array() > 0.0).cast<double>().matrix());
    g.w2.noalias() = tape.h1.transpose() * d2;
    g.b2 = d2.colwise().sum();

    Mat d1 = (d2 * p.w2.transpose())
                 .cwiseProduct((tape.z1.array() > 0.0).cast<double>().matrix());
    g.w1.noalias() = tape.x0.transpose() * d1;
    g.b1 = d1.colwise().sum();
    return g;
}

TrainState make_train_state(ModelParams params, double learning_rate, double momentum_coeff) {
    TrainState s;
    s.momentum = ParamGrads::zeros_like(params);
    s.params = std::move(params);
    s.learning_rate = learning_rate;
    s.momentum_coeff = momentum_coeff;
    return s;
}

TrainState sgd_step(const TrainState& state, const ParamGrads& grads) {
    if (!grads.all_finite()) throw TrainingError("sgd_step: non-finite gradients");

    TrainState next = state;
    const double mu = state.momentum_coeff;
    const double lr = state.learning_rate;
    auto update = [&](Mat& w, Mat& buf, const Mat& g) {
        buf = mu * buf + g;
        w -= lr * buf;
    };
    auto update_v = [&](Vec& w, Vec& buf, const Vec& g) {
        buf = mu * buf + g;
        w -= lr * buf;
    };
    update(next.params.w1, next.momentum.w1, grads.w1);
    update_v(next.params.b1, next.momentum.b1, grads.b1);
    update(next.params.w2, next.momentum.w2, grads.w2);
    update_v(next.params.b2, next.momentum.b2, grads.b2);
    update(next.params.w3, next.momentum.w3, grads.w3);
    update_v(next.params.b3, next.momentum.b3, grads.b3);
    update(next.params.w4, next.momentum.w4, grads.w4);
    update_v(next.params.b4, next.momentum.b4, grads.b4);
    next.step = state.step + 1;
    return next;
}

Mat probabilities(const Mat& logits) {
    if (!logits.allFinite()) throw ArgumentError("probabilities: non-finite logits");
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

void save_checkpoint(const ModelParams& params, int k_neighbors, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t header[4] = {static_cast<std::uint64_t>(params.input_dim()),
                                     static_cast<std::uint64_t>(params.hidden()),
                                     static_cast<std::uint64_t>(params.n_classes()),
                                     static_cast<std::uint64_t>(k_neighbors)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    if (!out) throw IoError("checkpoint write failure: " + path);
    write_mat(out, params.w1, path);
    write_mat(out, params.b1, path);
    write_mat(out, params.w2, path);
    write_mat(out, params.b2, path);
    write_mat(out, params.w3, path);
    write_mat(out, params.b3, path);
    write_mat(out, params.w4, path);
    write_mat(out, params.b4, path);
    out.close();
    if (!out) throw IoError("checkpoint write failure: " + path);
}

std::pair<ModelParams, int> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ParseError("bad checkpoint magic: " + path);
    std::uint64_t header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in) throw ParseError("truncated checkpoint: " + path);
    const auto input_dim = static_cast<Eigen::Index>(header[0]);
    const auto hidden = static_cast<Eigen::Index>(header[1]);
    const auto n_classes = static_cast<Eigen::Index>(header[2]);
    const int k_neighbors = static_cast<int>(header[3]);
    if (input_dim < 3 || hidden < 1 || n_classes < 2 || k_neighbors < 1)
        throw ParseError("invalid checkpoint header: " + path);

    ModelParams p;
    p.w1 = read_mat(in, input_dim, hidden, path);
    p.b1 = read_mat(in, hidden, 1, path);
    p.w2 = read_mat(in, hidden, hidden, path);
    p.b2 = read_mat(in, hidden, 1, path);
    p.w3 = read_mat(in, 2 * hidden, hidden, path);
    p.b3 = read_mat(in, hidden, 1, path);
    p.w4 = read_mat(in, hidden, n_classes, path);
    p.b4 = read_mat(in, n_classes, 1, path);
    char extra;
    if (in.read(&extra, 1)) throw ParseError("trailing bytes in checkpoint: " + path);
    return {std::move(p), k_neighbors};
}

}  // namespace racseg
