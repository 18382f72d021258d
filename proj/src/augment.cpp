#include "racseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace racseg {

namespace {

Eigen::Matrix3d rot_z(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix3d r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
}

Eigen::Matrix3d rot_xyz(double ax, double ay, double az) {
    const double cx = std::cos(ax), sx = std::sin(ax);
    const double cy = std::cos(ay), sy = std::sin(ay);
    Eigen::Matrix3d rx, ry;
    rx << 1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx;
    ry << cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy;
    return rot_z(az) * ry * rx;
}

/// Greedy farthest-point sampling; first pick is uniform, later picks
/// maximize the min distance to the chosen set, ties toward the lower index.
std::vector<Eigen::Index> farthest_point_sample(const Mat& loc, int count, Rng& rng) {
    const Eigen::Index n = loc.rows();
    std::vector<Eigen::Index> picks;
    picks.reserve(static_cast<std::size_t>(count));
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    picks.push_back(first(rng));
    Vec min_d2 = (loc.rowwise() - loc.row(picks[0])).rowwise().squaredNorm();
    while (static_cast<int>(picks.size()) < count) {
        Eigen::Index best = 0;
        double best_d2 = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (min_d2(i) > best_d2) {
                best_d2 = min_d2(i);
                best = i;
            }
        }
        picks.push_back(best);
        Vec d2 = (loc.rowwise() - loc.row(best)).rowwise().squaredNorm();
        min_d2 = min_d2.cwiseMin(d2);
    }
    return picks;
}

}  // namespace

PointCloud affine_transform(const PointCloud& cloud, const AffineParams& params) {
    if (!std::isfinite(params.rotation_angle) || !std::isfinite(params.scale) ||
        !params.translation.allFinite())
        throw ArgumentError("affine_transform: non-finite parameters");
    if (params.scale <= 0.0) throw ArgumentError("affine_transform: scale must be positive");

    const Mat& loc = cloud.locations();
    const Eigen::Matrix3d r = rot_z(params.rotation_angle);
    const Eigen::RowVector3d centroid = loc.colwise().mean();
    // loc' = s*R*(loc - c) + c + t, expanded so identity parameters leave the
    // rows bit-exact: offset = c + t - s*R*c vanishes when R = I, s = 1, t = 0.
    const Eigen::RowVector3d offset =
        centroid + params.translation.transpose() -
        params.scale * (centroid * r.transpose());
    Mat out = params.scale * (loc * r.transpose());
    out.rowwise() += offset;
    return PointCloud(std::move(out), cloud.features());
}

PointCloud pointwise_noise(const PointCloud& cloud, const NoiseParams& params, Rng& rng) {
    if (params.sigma < 0.0 || params.clip < 0.0)
        throw ArgumentError("pointwise_noise: sigma and clip must be non-negative");
    Mat loc = cloud.locations();
    if (params.sigma > 0.0) {
        std::normal_distribution<double> jitter(0.0, params.sigma);
        for (Eigen::Index i = 0; i < loc.rows(); ++i)
            for (int c = 0; c < 3; ++c) {
                const double g = std::clamp(jitter(rng), -params.clip, params.clip);
                loc(i, c) += g;
            }
    }
    return PointCloud(std::move(loc), cloud.features());
}

PointCloud pointwolf_deform(const PointCloud& cloud, const PointWolfParams& params, Rng& rng) {
    if (params.n_anchors < 1) throw ArgumentError("pointwolf: n_anchors must be >= 1");
    if (params.n_anchors > cloud.n_points())
        throw ArgumentError("pointwolf: n_anchors exceeds point count");
    if (params.kernel_bandwidth <= 0.0)
        throw ArgumentError("pointwolf: kernel bandwidth must be positive");
    if (params.scale_min <= 0.0 || params.scale_max < params.scale_min)
        throw ArgumentError("pointwolf: invalid scale range");

    const Mat& loc = cloud.locations();
    const Eigen::Index n = loc.rows();
    const auto anchors = farthest_point_sample(loc, params.n_anchors, rng);

    const double rot_max = params.rotation_max_deg * 3.14159265358979323846 / 180.0;
    std::uniform_real_distribution<double> angle(-rot_max, rot_max);
    std::uniform_real_distribution<double> scale(params.scale_min, params.scale_max);
    std::uniform_real_distribution<double> trans(-params.translation_max, params.translation_max);

    struct AnchorTransform {
        Eigen::Matrix3d rot;
        double scale;
        Eigen::RowVector3d offset;  // anchor + t - s*R*anchor
    };
    std::vector<AnchorTransform> transforms;
    transforms.reserve(anchors.size());
    for (const auto a : anchors) {
        const double ax = angle(rng), ay = angle(rng), az = angle(rng);
        const double s = scale(rng);
        const Eigen::RowVector3d t(trans(rng), trans(rng), trans(rng));
        const Eigen::Matrix3d r = rot_xyz(ax, ay, az);
        const Eigen::RowVector3d anchor = loc.row(a);
        transforms.push_back({r, s, anchor + t - s * (anchor * r.transpose())});
    }

    const double inv_bw2 = 1.0 / (params.kernel_bandwidth * params.kernel_bandwidth);
    const int na = params.n_anchors;
    Mat out = loc;
    std::vector<double> d2(static_cast<std::size_t>(na)), w(static_cast<std::size_t>(na));
    for (Eigen::Index i = 0; i < n; ++i) {
        double d2_min = std::numeric_limits<double>::infinity();
        for (int a = 0; a < na; ++a) {
            const double d = (loc.row(i) - loc.row(anchors[static_cast<std::size_t>(a)]))
                                 .squaredNorm();
            d2[static_cast<std::size_t>(a)] = d;
            d2_min = std::min(d2_min, d);
        }
        // Shift by the closest anchor so the largest kernel weight is 1; the
        // shift cancels in the normalization and keeps far points from
        // underflowing to an all-zero weight vector.
        double wsum = 0.0;
        for (int a = 0; a < na; ++a) {
            w[static_cast<std::size_t>(a)] =
                std::exp(-(d2[static_cast<std::size_t>(a)] - d2_min) * inv_bw2);
            wsum += w[static_cast<std::size_t>(a)];
        }
        // Blend per-anchor displacements; with every transform equal to the
        // identity the displacement is exactly zero and the point is unmoved.
        Eigen::RowVector3d disp = Eigen::RowVector3d::Zero();
        for (int a = 0; a < na; ++a) {
            const auto& tr = transforms[static_cast<std::size_t>(a)];
            const Eigen::RowVector3d moved =
                tr.scale * (loc.row(i) * tr.rot.transpose()) + tr.offset;
            disp += (w[static_cast<std::size_t>(a)] / wsum) * (moved - loc.row(i));
        }
        out.row(i) += disp;
    }
    return PointCloud(std::move(out), cloud.features());
}

AffineParams sample_affine(const AffineRanges& ranges, Rng& rng) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
    std::uniform_real_distribution<double> scale(ranges.scale_min, ranges.scale_max);
    std::uniform_real_distribution<double> trans(-ranges.translation_max, ranges.translation_max);
    AffineParams p;
    p.rotation_angle = angle(rng);
    p.scale = scale(rng);
    p.translation = Eigen::Vector3d(trans(rng), trans(rng), trans(rng));
    return p;
}

std::vector<PointCloud> gen_augmented_views(const PointCloud& cloud,
                                            const AugmentationSpec& spec) {
    if (spec.methods.empty()) throw ArgumentError("augmentation spec needs at least one method");
    Rng master(spec.rng_seed);
    std::vector<PointCloud> views;
    views.reserve(spec.methods.size());
    for (const auto method : spec.methods) {
        Rng view_rng(master());
        switch (method) {
            case AugMethod::PointWolf:
                views.push_back(pointwolf_deform(cloud, spec.pointwolf, view_rng));
                break;
            case AugMethod::Affine:
                views.push_back(affine_transform(cloud, sample_affine(spec.affine, view_rng)));
                break;
            case AugMethod::Noise:
                views.push_back(pointwise_noise(cloud, spec.noise, view_rng));
                break;
        }
    }
    return views;
}

MixSample mix_augment_with_alpha(const PointCloud& view_m, const PointCloud& view_n, Vec alpha) {
    if (view_m.n_points() != view_n.n_points() || view_m.feature_dim() != view_n.feature_dim())
        throw ArgumentError("mix_augment: views must have identical shape");
    if (alpha.size() != view_m.n_points())
        throw ArgumentError("mix_augment: alpha length must equal point count");
    if ((alpha.array() < 0.0).any() || (alpha.array() > 1.0).any())
        throw ArgumentError("mix_augment: alpha entries must lie in [0, 1]");

    const Eigen::Index n = view_m.n_points();
    Mat loc(n, 3), feat(n, view_m.feature_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = alpha(i), b = 1.0 - a;
        for (Eigen::Index c = 0; c < 3; ++c) {
            const double m = view_m.locations()(i, c), v = view_n.locations()(i, c);
            loc(i, c) = std::clamp(a * m + b * v, std::min(m, v), std::max(m, v));
        }
        for (Eigen::Index c = 0; c < feat.cols(); ++c) {
            const double m = view_m.features()(i, c), v = view_n.features()(i, c);
            feat(i, c) = std::clamp(a * m + b * v, std::min(m, v), std::max(m, v));
        }
    }
    MixSample sample{PointCloud(std::move(loc), std::move(feat)), std::move(alpha), {0, 0}};
    return sample;
}

MixSample mix_augment(const PointCloud& view_m, const PointCloud& view_n, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Vec alpha(view_m.n_points());
    for (Eigen::Index i = 0; i < alpha.size(); ++i) alpha(i) = uniform(rng);
    return mix_augment_with_alpha(view_m, view_n, std::move(alpha));
}

}  // namespace racseg
