#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "racseg/pointcloud.hpp"

namespace racseg {

using Rng = std::mt19937_64;

/// Global rigid-ish transform: rotation about the vertical axis and uniform
/// scaling, both about the cloud centroid, followed by a translation.
struct AffineParams {
    double rotation_angle = 0.0;            // radians, [0, 2*pi)
    double scale = 1.0;                      // > 0
    Eigen::Vector3d translation{0.0, 0.0, 0.0};  // meters
};

/// Sampling ranges for per-view affine draws.
struct AffineRanges {
    double scale_min = 0.8;
    double scale_max = 1.25;
    double translation_max = 0.2;  // per axis, meters
};

/// Smooth non-rigid deformation: anchors picked by farthest-point sampling,
/// one sampled rigid transform per anchor, blended per point with Gaussian
/// kernel weights.
struct PointWolfParams {
    int n_anchors = 4;
    double kernel_bandwidth = 0.5;   // meters, > 0
    double rotation_max_deg = 15.0;  // per axis
    double scale_min = 0.9;
    double scale_max = 1.1;
    double translation_max = 0.1;    // per axis, meters
    std::uint64_t rng_seed = 0;
};

struct NoiseParams {
    double sigma = 0.01;  // meters, >= 0
    double clip = 0.05;   // meters, >= 0
};

/// A point-wise convex blend of two index-corresponding views.
struct MixSample {
    PointCloud cloud;
    Vec alpha;                       // length N, entries in [0, 1]
    std::pair<int, int> source_views{0, 0};
};

enum class AugMethod { PointWolf, Affine, Noise };

/// The K base augmentations applied (independently, not chained) to the
/// original cloud; list order defines view index 1..K.
struct AugmentationSpec {
    std::vector<AugMethod> methods{AugMethod::PointWolf, AugMethod::Affine};
    PointWolfParams pointwolf;
    AffineRanges affine;
    NoiseParams noise;
    std::uint64_t rng_seed = 0;

    int k_views() const { return static_cast<int>(methods.size()); }
};

PointCloud affine_transform(const PointCloud& cloud, const AffineParams& params);

PointCloud pointwise_noise(const PointCloud& cloud, const NoiseParams& params, Rng& rng);

PointCloud pointwolf_deform(const PointCloud& cloud, const PointWolfParams& params, Rng& rng);

/// Samples concrete affine parameters from the given ranges.
AffineParams sample_affine(const AffineRanges& ranges, Rng& rng);

std::vector<PointCloud> gen_augmented_views(const PointCloud& cloud, const AugmentationSpec& spec);

MixSample mix_augment(const PointCloud& view_m, const PointCloud& view_n, Rng& rng);

/// Deterministic variant with caller-supplied per-point coefficients.
MixSample mix_augment_with_alpha(const PointCloud& view_m, const PointCloud& view_n, Vec alpha);

}  // namespace racseg
