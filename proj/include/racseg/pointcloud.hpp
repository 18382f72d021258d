#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "racseg/common.hpp"

namespace racseg {

/// A scene as an N x 3 location matrix plus an N x D_f per-point feature
/// matrix. Row index is point identity: every transformation downstream
/// preserves row count and row order.
class PointCloud {
  public:
    PointCloud(Mat locations, Mat features);

    const Mat& locations() const { return locations_; }
    const Mat& features() const { return features_; }
    Eigen::Index n_points() const { return locations_.rows(); }
    Eigen::Index feature_dim() const { return features_.cols(); }

  private:
    Mat locations_;  // N x 3, meters
    Mat features_;   // N x D_f
};

/// The M manually labeled points of a scene.
struct SparseLabels {
    struct Entry {
        std::int64_t point_index;
        std::int64_t class_id;
    };
    std::vector<Entry> entries;

    std::size_t n_labeled() const { return entries.size(); }

    /// Throws ArgumentError on duplicate/out-of-range indices or classes.
    void validate(Eigen::Index n_points, std::int64_t n_classes) const;
};

/// Full per-point ground truth; used for synthetic data and evaluation only.
struct DenseLabels {
    std::vector<std::int64_t> class_per_point;
    std::vector<std::int64_t> instance_per_point;

    std::size_t size() const { return class_per_point.size(); }
};

enum class CloudFormat { AsciiXyz, Binary };

struct LoadedCloud {
    PointCloud cloud;
    std::optional<DenseLabels> labels;
};

/// Reads a cloud (and labels when present) from disk.
///
/// ascii-xyz: one point per line "x y z f_1..f_D [class [instance]]", '#'
/// starts a comment. Label columns are announced by a "# labels: class
/// [instance]" directive; without it every column after xyz is a feature.
/// binary: magic "RACPC1", u64 N, u64 D_f, u8 has_labels, N x (3+D_f) f64
/// rows, then N x 2 i64 label rows when has_labels != 0. Little-endian.
LoadedCloud load_cloud(const std::string& path, CloudFormat format);

void save_cloud(const PointCloud& cloud, const std::optional<DenseLabels>& labels,
                const std::string& path, CloudFormat format);

/// Exact brute-force k-nearest-neighbors on locations. Row i holds the k
/// nearest points to point i (self included), sorted by (distance, index);
/// ties break toward the lower index.
IndexMat knn_indices(const PointCloud& cloud, int k);

}  // namespace racseg
