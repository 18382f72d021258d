#include "racseg/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace racseg {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Instance {
    int class_id;
    int points;
    // Placement sampled once per instance.
    Eigen::Vector3d center;
    Eigen::Vector3d size;  // per-kind meaning: box extents, sphere/cylinder radius+height
    int wall_side = 0;
};

double instance_weight(PrimitiveKind kind, const Instance& inst, double extent) {
    switch (kind) {
        case PrimitiveKind::Floor: return extent * extent;
        case PrimitiveKind::Wall: return extent * (extent * 0.5);
        case PrimitiveKind::Box: {
            const auto& s = inst.size;
            return 2.0 * (s.x() * s.y() + s.x() * s.z() + s.y() * s.z());
        }
        case PrimitiveKind::Sphere: return 4.0 * kPi * inst.size.x() * inst.size.x();
        case PrimitiveKind::Cylinder:
            return 2.0 * kPi * inst.size.x() * (inst.size.x() + inst.size.y());
    }
    return 1.0;
}

Eigen::Vector3d sample_surface_point(PrimitiveKind kind, const Instance& inst, double extent,
                                     std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    switch (kind) {
        case PrimitiveKind::Floor:
            return {u01(rng) * extent, u01(rng) * extent, 0.0};
        case PrimitiveKind::Wall: {
            const double along = u01(rng) * extent;
            const double up = u01(rng) * extent * 0.5;
            switch (inst.wall_side) {
                case 0: return {along, 0.0, up};
                case 1: return {along, extent, up};
                case 2: return {0.0, along, up};
                default: return {extent, along, up};
            }
        }
        case PrimitiveKind::Box: {
            const auto& s = inst.size;
            // Pick a face proportional to its area, then a point on it.
            const double areas[3] = {s.y() * s.z(), s.x() * s.z(), s.x() * s.y()};
            const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
            double pick = u01(rng) * total;
            int axis = 0;
            double sign = 1.0;
            for (int a = 0; a < 3; ++a) {
                if (pick < areas[a]) { axis = a; sign = -1.0; break; }
                pick -= areas[a];
                if (pick < areas[a]) { axis = a; sign = 1.0; break; }
                pick -= areas[a];
            }
            Eigen::Vector3d p((u01(rng) - 0.5) * s.x(), (u01(rng) - 0.5) * s.y(),
                              (u01(rng) - 0.5) * s.z());
            p(axis) = 0.5 * sign * s(axis);
            return inst.center + p;
        }
        case PrimitiveKind::Sphere: {
            const double z = 2.0 * u01(rng) - 1.0;
            const double phi = 2.0 * kPi * u01(rng);
            const double r = inst.size.x();
            const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
            return inst.center +
                   Eigen::Vector3d(r * rho * std::cos(phi), r * rho * std::sin(phi), r * z);
        }
        case PrimitiveKind::Cylinder: {
            const double r = inst.size.x(), height = inst.size.y();
            const double lateral = 2.0 * kPi * r * height;
            const double caps = 2.0 * kPi * r * r;
            if (u01(rng) * (lateral + caps) < lateral) {
                const double phi = 2.0 * kPi * u01(rng);
                return inst.center + Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi),
                                                     (u01(rng) - 0.5) * height);
            }
            const double phi = 2.0 * kPi * u01(rng);
            const double rr = r * std::sqrt(u01(rng));
            const double cap = u01(rng) < 0.5 ? -0.5 : 0.5;
            return inst.center +
                   Eigen::Vector3d(rr * std::cos(phi), rr * std::sin(phi), cap * height);
        }
    }
    return Eigen::Vector3d::Zero();
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::vector<ClassSpec> default_palette() {
    return {
        {"floor", PrimitiveKind::Floor, {0.45, 0.45, 0.45}, 1.0},
        {"wall", PrimitiveKind::Wall, {0.75, 0.72, 0.65}, 1.0},
        {"box", PrimitiveKind::Box, {0.80, 0.20, 0.15}, 1.0},
        {"sphere", PrimitiveKind::Sphere, {0.15, 0.65, 0.20}, 1.0},
        {"cylinder", PrimitiveKind::Cylinder, {0.20, 0.30, 0.80}, 1.0},
        {"crate", PrimitiveKind::Box, {0.85, 0.65, 0.10}, 1.4},
    };
}

std::pair<PointCloud, DenseLabels> generate_scene(const SceneConfig& config) {
    if (config.palette.size() < 2) throw ArgumentError("scene config needs at least 2 classes");
    if (config.n_points < 1) throw ArgumentError("scene config needs n_points >= 1");
    if (config.objects_min < 1 || config.objects_max < config.objects_min)
        throw ArgumentError("scene config has an infeasible object count range");
    if (config.extent <= 0.0) throw ArgumentError("scene extent must be positive");

    std::mt19937_64 rng(config.rng_seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::uniform_int_distribution<int> count_dist(config.objects_min, config.objects_max);
    const int n_objects = count_dist(rng);
    const int n_classes = config.n_classes();

    std::uniform_int_distribution<int> class_dist(0, n_classes - 1);
    std::vector<Instance> instances;
    instances.reserve(static_cast<std::size_t>(n_objects));
    for (int j = 0; j < n_objects; ++j) {
        Instance inst{};
        // The first C instances cover every palette class.
        inst.class_id = j < n_classes ? j : class_dist(rng);
        const ClassSpec& spec = config.palette[static_cast<std::size_t>(inst.class_id)];
        const double e = config.extent;
        switch (spec.kind) {
            case PrimitiveKind::Floor:
                break;
            case PrimitiveKind::Wall:
                inst.wall_side = static_cast<int>(u01(rng) * 4.0);
                break;
            case PrimitiveKind::Box: {
                const double sx = (0.3 + 0.6 * u01(rng)) * spec.size_scale;
                const double sy = (0.3 + 0.6 * u01(rng)) * spec.size_scale;
                const double sz = (0.3 + 0.6 * u01(rng)) * spec.size_scale;
                inst.size = {sx, sy, sz};
                inst.center = {e * (0.15 + 0.7 * u01(rng)), e * (0.15 + 0.7 * u01(rng)),
                               0.5 * sz};
                break;
            }
            case PrimitiveKind::Sphere: {
                const double r = (0.15 + 0.25 * u01(rng)) * spec.size_scale;
                inst.size = {r, 0.0, 0.0};
                inst.center = {e * (0.15 + 0.7 * u01(rng)), e * (0.15 + 0.7 * u01(rng)), r};
                break;
            }
            case PrimitiveKind::Cylinder: {
                const double r = (0.1 + 0.2 * u01(rng)) * spec.size_scale;
                const double height = (0.5 + 0.7 * u01(rng)) * spec.size_scale;
                inst.size = {r, height, 0.0};
                inst.center = {e * (0.15 + 0.7 * u01(rng)), e * (0.15 + 0.7 * u01(rng)),
                               0.5 * height};
                break;
            }
        }
        instances.push_back(inst);
    }

    // Allocate points proportional to surface area with a floor per instance
    // so that every object can be clicked.
    const int min_points = std::min(16, config.n_points / n_objects);
    std::vector<double> weights(instances.size());
    double weight_sum = 0.0;
    for (std::size_t j = 0; j < instances.size(); ++j) {
        const auto kind = config.palette[static_cast<std::size_t>(instances[j].class_id)].kind;
        weights[j] = instance_weight(kind, instances[j], config.extent);
        weight_sum += weights[j];
    }
    std::vector<int> alloc(instances.size());
    int assigned = 0;
    for (std::size_t j = 0; j < instances.size(); ++j) {
        alloc[j] = std::max(min_points, static_cast<int>(std::floor(
                                            config.n_points * weights[j] / weight_sum)));
        assigned += alloc[j];
    }
    std::size_t adjust = 0;
    while (assigned > config.n_points) {
        auto& a = alloc[adjust % alloc.size()];
        if (a > min_points) { --a; --assigned; }
        ++adjust;
        if (adjust > alloc.size() * static_cast<std::size_t>(config.n_points)) break;
    }
    while (assigned < config.n_points) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < weights.size(); ++j)
            if (weights[j] > weights[arg]) arg = j;
        ++alloc[arg];
        ++assigned;
    }

    Mat locations(config.n_points, 3), features(config.n_points, 3);
    DenseLabels labels;
    labels.class_per_point.resize(static_cast<std::size_t>(config.n_points));
    labels.instance_per_point.resize(static_cast<std::size_t>(config.n_points));
    std::normal_distribution<double> surf(0.0, config.surface_noise);
    std::normal_distribution<double> cnoise(0.0, config.color_noise);

    Eigen::Index row = 0;
    for (std::size_t j = 0; j < instances.size(); ++j) {
        const Instance& inst = instances[j];
        const ClassSpec& spec = config.palette[static_cast<std::size_t>(inst.class_id)];
        for (int q = 0; q < alloc[j]; ++q, ++row) {
            Eigen::Vector3d p = sample_surface_point(spec.kind, inst, config.extent, rng);
            if (config.surface_noise > 0.0)
                p += Eigen::Vector3d(surf(rng), surf(rng), surf(rng));
            locations.row(row) = p.transpose();
            for (int ch = 0; ch < 3; ++ch)
                features(row, ch) =
                    std::clamp(spec.color(ch) + (config.color_noise > 0.0 ? cnoise(rng) : 0.0),
                               0.0, 1.0);
            labels.class_per_point[static_cast<std::size_t>(row)] = inst.class_id;
            labels.instance_per_point[static_cast<std::size_t>(row)] =
                static_cast<std::int64_t>(j);
        }
    }

    return {PointCloud(std::move(locations), std::move(features)), std::move(labels)};
}

SparseLabels sample_clicks(const DenseLabels& labels, const ClickScheme& scheme) {
    if (scheme.clicks_per_thing < 1)
        throw ArgumentError("click scheme needs clicks_per_thing >= 1");

    std::map<std::int64_t, std::vector<std::int64_t>> by_instance;
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_instance[labels.instance_per_point[i]].push_back(static_cast<std::int64_t>(i));

    std::mt19937_64 rng(scheme.rng_seed);
    SparseLabels out;
    for (const auto& [instance, points] : by_instance) {
        if (static_cast<int>(points.size()) < scheme.clicks_per_thing)
            throw AnnotationError("instance " + std::to_string(instance) + " has only " +
                                  std::to_string(points.size()) + " points but " +
                                  std::to_string(scheme.clicks_per_thing) +
                                  " clicks were requested");
        std::vector<std::int64_t> chosen;
        std::sample(points.begin(), points.end(), std::back_inserter(chosen),
                    scheme.clicks_per_thing, rng);
        for (const auto idx : chosen)
            out.entries.push_back(
                {idx, labels.class_per_point[static_cast<std::size_t>(idx)]});
    }
    std::sort(out.entries.begin(), out.entries.end(),
              [](const auto& a, const auto& b) { return a.point_index < b.point_index; });
    return out;
}

DatasetManifest make_dataset(const SceneConfig& config, int n_train, int n_test,
                             const ClickScheme& scheme, const std::string& out_dir) {
    if (n_train < 1 || n_test < 0) throw ArgumentError("make_dataset: invalid split sizes");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory: " + out_dir);

    DatasetManifest manifest;
    long long total_labeled = 0, total_points = 0;
    const int n_scenes = n_train + n_test;
    for (int s = 0; s < n_scenes; ++s) {
        SceneConfig scene_config = config;
        scene_config.rng_seed = config.rng_seed + static_cast<std::uint64_t>(s);
        auto [cloud, dense] = generate_scene(scene_config);

        ClickScheme scene_scheme = scheme;
        scene_scheme.rng_seed = scheme.rng_seed + static_cast<std::uint64_t>(s);
        const SparseLabels clicks = sample_clicks(dense, scene_scheme);

        const std::string split = s < n_train ? "train" : "test";
        char name[64];
        std::snprintf(name, sizeof(name), "scene_%03d", s);
        const std::string cloud_rel = std::string(name) + ".rpc";
        const std::string clicks_rel = std::string(name) + ".clicks";

        save_cloud(cloud, dense, (fs::path(out_dir) / cloud_rel).string(), CloudFormat::Binary);
        std::ofstream cf(fs::path(out_dir) / clicks_rel);
        if (!cf) throw IoError("cannot write clicks file in " + out_dir);
        for (const auto& e : clicks.entries) cf << e.point_index << ' ' << e.class_id << '\n';
        cf.close();
        if (!cf) throw IoError("write failure in " + out_dir);

        total_labeled += static_cast<long long>(clicks.n_labeled());
        total_points += cloud.n_points();
        manifest.scenes.push_back({split, cloud_rel, clicks_rel});
    }

    manifest.label_fraction =
        static_cast<double>(total_labeled) / static_cast<double>(total_points);
    manifest.manifest_path = (fs::path(out_dir) / "manifest.tsv").string();

    std::ofstream mf(manifest.manifest_path);
    if (!mf) throw IoError("cannot write manifest: " + manifest.manifest_path);
    mf << "# label_fraction " << format_double(manifest.label_fraction) << '\n';
    for (const auto& scene : manifest.scenes)
        mf << scene.split << '\t' << scene.cloud_path << '\t' << scene.clicks_path << '\n';
    mf.close();
    if (!mf) throw IoError("write failure: " + manifest.manifest_path);
    return manifest;
}

DatasetManifest load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    DatasetManifest manifest;
    manifest.manifest_path = manifest_path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string word;
            hs >> word;
            if (word == "label_fraction") hs >> manifest.label_fraction;
            continue;
        }
        std::istringstream ls(line);
        DatasetManifest::SceneEntry entry;
        if (!std::getline(ls, entry.split, '\t') || !std::getline(ls, entry.cloud_path, '\t') ||
            !std::getline(ls, entry.clicks_path))
            throw ParseError(manifest_path + ":" + std::to_string(line_no) +
                             ": expected split<TAB>cloud<TAB>clicks");
        if (entry.split != "train" && entry.split != "test")
            throw ParseError(manifest_path + ":" + std::to_string(line_no) + ": unknown split '" +
                             entry.split + "'");
        manifest.scenes.push_back(std::move(entry));
    }
    if (manifest.scenes.empty()) throw ParseError("manifest lists no scenes: " + manifest_path);
    return manifest;
}

}  // namespace racseg
