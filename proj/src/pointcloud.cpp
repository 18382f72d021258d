#include "racseg/pointcloud.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <vector>

namespace racseg {

namespace {

constexpr char kBinaryMagic[6] = {'R', 'A', 'C', 'P', 'C', '1'};

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_raw(std::ostream& out, const void* data, std::size_t n, const std::string& path) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failure: " + path);
}

void read_raw(std::istream& in, void* data, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n))
        throw ParseError("truncated binary cloud: " + path);
}

}  // namespace

PointCloud::PointCloud(Mat locations, Mat features)
    : locations_(std::move(locations)), features_(std::move(features)) {
    if (locations_.rows() < 1)
        throw ArgumentError("point cloud must contain at least one point");
    if (locations_.cols() != 3)
        throw ArgumentError("locations must have 3 columns");
    if (features_.rows() != locations_.rows())
        throw ArgumentError("locations and features row counts differ");
    if (!locations_.allFinite() || !features_.allFinite())
        throw ArgumentError("point cloud contains non-finite values");
}

void SparseLabels::validate(Eigen::Index n_points, std::int64_t n_classes) const {
    std::unordered_set<std::int64_t> seen;
    for (const auto& e : entries) {
        if (e.point_index < 0 || e.point_index >= n_points)
            throw ArgumentError("sparse label index out of range: " +
                                std::to_string(e.point_index));
        if (e.class_id < 0 || e.class_id >= n_classes)
            throw ArgumentError("sparse label class out of range: " + std::to_string(e.class_id));
        if (!seen.insert(e.point_index).second)
            throw ArgumentError("duplicate sparse label index: " + std::to_string(e.point_index));
    }
}

LoadedCloud load_cloud(const std::string& path, CloudFormat format) {
    std::ifstream in(path, format == CloudFormat::Binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open cloud file: " + path);

    if (format == CloudFormat::Binary) {
        char magic[6];
        read_raw(in, magic, sizeof(magic), path);
        if (std::memcmp(magic, kBinaryMagic, sizeof(magic)) != 0)
            throw ParseError("bad magic in binary cloud: " + path);
        std::uint64_t n = 0, d_f = 0;
        std::uint8_t has_labels = 0;
        read_raw(in, &n, sizeof(n), path);
        read_raw(in, &d_f, sizeof(d_f), path);
        read_raw(in, &has_labels, sizeof(has_labels), path);
        if (n == 0) throw ParseError("empty binary cloud: " + path);
        const auto rows = static_cast<Eigen::Index>(n);
        const auto feat = static_cast<Eigen::Index>(d_f);
        Mat locations(rows, 3), features(rows, feat);
        std::vector<double> row(3 + d_f);
        for (Eigen::Index i = 0; i < rows; ++i) {
            read_raw(in, row.data(), row.size() * sizeof(double), path);
            for (int c = 0; c < 3; ++c) locations(i, c) = row[static_cast<std::size_t>(c)];
            for (Eigen::Index c = 0; c < feat; ++c)
                features(i, c) = row[static_cast<std::size_t>(3 + c)];
        }
        std::optional<DenseLabels> labels;
        if (has_labels != 0) {
            DenseLabels dl;
            dl.class_per_point.resize(n);
            dl.instance_per_point.resize(n);
            std::int64_t pair[2];
            for (std::uint64_t i = 0; i < n; ++i) {
                read_raw(in, pair, sizeof(pair), path);
                dl.class_per_point[i] = pair[0];
                dl.instance_per_point[i] = pair[1];
            }
            labels = std::move(dl);
        }
        return LoadedCloud{PointCloud(std::move(locations), std::move(features)),
                           std::move(labels)};
    }

    // ascii-xyz
    std::vector<std::vector<double>> rows;
    int label_cols = 0;
    std::string line;
    std::size_t line_no = 0;
    Eigen::Index n_cols = -1;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            std::istringstream hs(line.substr(first + 1));
            std::string word;
            hs >> word;
            if (word == "labels:") {
                std::string col;
                label_cols = 0;
                while (hs >> col) ++label_cols;
                if (label_cols < 1 || label_cols > 2)
                    throw ParseError(path + ":" + std::to_string(line_no) +
                                     ": labels directive must name 1 or 2 columns");
            }
            continue;
        }
        std::istringstream ls(line);
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) {
            double v = 0.0;
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric field '" +
                                 tok + "'");
            vals.push_back(v);
        }
        if (n_cols < 0) {
            n_cols = static_cast<Eigen::Index>(vals.size());
            if (n_cols < 3 + label_cols)
                throw ParseError(path + ":" + std::to_string(line_no) + ": expected at least " +
                                 std::to_string(3 + label_cols) + " columns, got " +
                                 std::to_string(vals.size()));
        } else if (static_cast<Eigen::Index>(vals.size()) != n_cols) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(n_cols) + " columns, got " +
                             std::to_string(vals.size()));
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw ParseError("empty cloud file: " + path);

    const auto n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index feat = n_cols - 3 - label_cols;
    Mat locations(n, 3), features(n, feat);
    std::optional<DenseLabels> labels;
    if (label_cols > 0) {
        labels.emplace();
        labels->class_per_point.resize(rows.size());
        labels->instance_per_point.assign(rows.size(), 0);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (int c = 0; c < 3; ++c) locations(i, c) = r[static_cast<std::size_t>(c)];
        for (Eigen::Index c = 0; c < feat; ++c)
            features(i, c) = r[static_cast<std::size_t>(3 + c)];
        if (label_cols > 0) {
            labels->class_per_point[static_cast<std::size_t>(i)] =
                static_cast<std::int64_t>(r[static_cast<std::size_t>(3 + feat)]);
            if (label_cols == 2)
                labels->instance_per_point[static_cast<std::size_t>(i)] =
                    static_cast<std::int64_t>(r[static_cast<std::size_t>(4 + feat)]);
        }
    }
    return LoadedCloud{PointCloud(std::move(locations), std::move(features)), std::move(labels)};
}

void save_cloud(const PointCloud& cloud, const std::optional<DenseLabels>& labels,
                const std::string& path, CloudFormat format) {
    if (labels && labels->size() != static_cast<std::size_t>(cloud.n_points()))
        throw ArgumentError("label count does not match cloud size");

    std::ofstream out(path, format == CloudFormat::Binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot open for writing: " + path);

    const Eigen::Index n = cloud.n_points();
    const Eigen::Index feat = cloud.feature_dim();

    if (format == CloudFormat::Binary) {
        write_raw(out, kBinaryMagic, sizeof(kBinaryMagic), path);
        const std::uint64_t n64 = static_cast<std::uint64_t>(n);
        const std::uint64_t d64 = static_cast<std::uint64_t>(feat);
        const std::uint8_t has_labels = labels ? 1 : 0;
        write_raw(out, &n64, sizeof(n64), path);
        write_raw(out, &d64, sizeof(d64), path);
        write_raw(out, &has_labels, sizeof(has_labels), path);
        std::vector<double> row(static_cast<std::size_t>(3 + feat));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(c)] = cloud.locations()(i, c);
            for (Eigen::Index c = 0; c < feat; ++c)
                row[static_cast<std::size_t>(3 + c)] = cloud.features()(i, c);
            write_raw(out, row.data(), row.size() * sizeof(double), path);
        }
        if (labels) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const std::int64_t pair[2] = {
                    labels->class_per_point[static_cast<std::size_t>(i)],
                    labels->instance_per_point[static_cast<std::size_t>(i)]};
                write_raw(out, pair, sizeof(pair), path);
            }
        }
    } else {
        if (labels) out << "# labels: class instance\n";
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 3; ++c) {
                if (c) out << ' ';
                out << format_double(cloud.locations()(i, c));
            }
            for (Eigen::Index c = 0; c < feat; ++c)
                out << ' ' << format_double(cloud.features()(i, c));
            if (labels)
                out << ' ' << labels->class_per_point[static_cast<std::size_t>(i)] << ' '
                    << labels->instance_per_point[static_cast<std::size_t>(i)];
            out << '\n';
        }
        if (!out) throw IoError("write failure: " + path);
    }
    out.close();
    if (!out) throw IoError("write failure: " + path);
}

IndexMat knn_indices(const PointCloud& cloud, int k) {
    const Eigen::Index n = cloud.n_points();
    if (k < 1 || static_cast<Eigen::Index>(k) > n)
        throw ArgumentError("knn: k must be in [1, n_points], got " + std::to_string(k));

    IndexMat out(n, k);
    const Mat& loc = cloud.locations();
    std::vector<std::pair<double, std::int32_t>> dists(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dx = loc(j, 0) - loc(i, 0);
            const double dy = loc(j, 1) - loc(i, 1);
            const double dz = loc(j, 2) - loc(i, 2);
            dists[static_cast<std::size_t>(j)] = {dx * dx + dy * dy + dz * dz,
                                                  static_cast<std::int32_t>(j)};
        }
        std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
        for (int c = 0; c < k; ++c) out(i, c) = dists[static_cast<std::size_t>(c)].second;
    }
    return out;
}

}  // namespace racseg
