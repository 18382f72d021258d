#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "racseg/pointcloud.hpp"

namespace racseg {

enum class PrimitiveKind { Floor, Wall, Box, Sphere, Cylinder };

/// One palette entry; the class id of a point is the index of its entry.
struct ClassSpec {
    std::string name;
    PrimitiveKind kind = PrimitiveKind::Box;
    Eigen::Vector3d color{0.5, 0.5, 0.5};
    double size_scale = 1.0;
};

struct SceneConfig {
    int n_points = 4096;
    std::vector<ClassSpec> palette;  // size C >= 2
    int objects_min = 8;
    int objects_max = 14;
    double extent = 6.0;           // meters
    double surface_noise = 0.008;  // meters
    double color_noise = 0.13;
    std::uint64_t rng_seed = 7;

    int n_classes() const { return static_cast<int>(palette.size()); }
};

/// floor, wall, box, sphere, cylinder, crate (a recolored box).
std::vector<ClassSpec> default_palette();

struct ClickScheme {
    int clicks_per_thing = 1;  // 1 = one click per object, 3 = three
    std::uint64_t rng_seed = 11;
};

/// Samples points on primitive surfaces with Gaussian surface and color
/// noise. The first C instances cycle through every palette class, so scenes
/// with at least C objects contain every class. Deterministic per seed.
std::pair<PointCloud, DenseLabels> generate_scene(const SceneConfig& config);

/// Uniformly picks clicks_per_thing distinct points from every object
/// instance and copies their ground-truth classes.
SparseLabels sample_clicks(const DenseLabels& labels, const ClickScheme& scheme);

struct DatasetManifest {
    struct SceneEntry {
        std::string split;  // "train" or "test"
        std::string cloud_path;
        std::string clicks_path;
    };
    std::vector<SceneEntry> scenes;
    double label_fraction = 0.0;
    std::string manifest_path;
};

/// Writes binary clouds with dense labels, ascii click files, and a manifest
/// ("split<TAB>cloud_path<TAB>clicks_path" lines preceded by a
/// "# label_fraction <v>" header). Per-scene seeds are seed + scene index.
DatasetManifest make_dataset(const SceneConfig& config, int n_train, int n_test,
                             const ClickScheme& scheme, const std::string& out_dir);

DatasetManifest load_manifest(const std::string& manifest_path);

}  // namespace racseg
