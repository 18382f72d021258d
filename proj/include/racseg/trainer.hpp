#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "racseg/augment.hpp"
#include "racseg/losses.hpp"
#include "racseg/reliability.hpp"
#include "racseg/segmodel.hpp"
#include "racseg/synthdata.hpp"

namespace racseg {

enum class ReliableLossKind { CrossEntropy, Dice };
enum class AmbiguousLossKind { KL, MSE };

struct TrainConfig {
    int epochs = 30;
    int batch_size = 2;           // scenes per optimizer step
    double learning_rate = 0.01;
    double momentum = 0.9;
    int hidden = 64;
    int knn = 16;
    AugmentationSpec augment;     // defines K and the per-view methods
    double tau = 0.7;
    double kappa = 0.05;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    ReliableLossKind reliable_loss = ReliableLossKind::CrossEntropy;
    AmbiguousLossKind ambiguous_loss = AmbiguousLossKind::KL;
    int eval_interval = 50;       // steps between validation rows
    std::uint64_t seed = 42;
    bool deterministic = false;

    int k_views() const { return augment.k_views(); }
};

/// One training scene with everything the pipeline reuses across steps.
/// Neighbor indices come from the original cloud and are shared by all views.
struct SceneData {
    std::string id;
    PointCloud cloud;
    DenseLabels dense;
    SparseLabels clicks;
    IndexMat neighbors;
};

struct Dataset {
    std::vector<SceneData> train;
    std::vector<SceneData> test;
};

Dataset load_dataset(const DatasetManifest& manifest, int knn);

/// One metrics CSV row. Train rows carry losses and pseudo-label stats;
/// eval rows carry only the step, mIoU, and seconds.
struct MetricsRecord {
    long step = 0;
    double seg = 0.0, rel = 0.0, amb = 0.0, mix = 0.0, total = 0.0;
    long reliable_count = 0;
    double reliable_frac = 0.0;
    double pl_acc = 1.0;
    bool pl_acc_on_empty = false;  // accuracy reported as 1.0 on an empty set
    std::optional<double> miou;
    double secs = 0.0;
    bool is_eval_row = false;
};

/// Per-scene observations exposed for inspection and structural tests.
/// view ids are 0-based augmented-view indices; -1 denotes the original.
struct SceneTrace {
    std::string scene_id;
    Mask mask;
    Mat one_hot;
    Mat original;  // P
    Mat mean;      // P-bar
    int view_m = 0, view_n = 0;
};

struct StepTrace {
    std::vector<SceneTrace> scenes;
};

std::pair<TrainState, MetricsRecord> train_step(const TrainState& state,
                                                const std::vector<const SceneData*>& batch,
                                                const TrainConfig& config, Rng& rng,
                                                StepTrace* trace = nullptr);

struct EvalResult {
    double miou = 0.0;
    std::vector<double> per_class_iou;       // NaN for classes absent from truth
    std::vector<bool> class_in_truth;
};

/// Pooled IoU over all points of all scenes; mIoU averages the classes
/// present in ground truth.
EvalResult evaluate(const ModelParams& params, const std::vector<const SceneData*>& scenes);

struct PseudoLabelStats {
    double accuracy = 1.0;
    long count = 0;
    bool empty_set = false;
};

PseudoLabelStats pseudo_label_stats(const ReliabilityPartition& part, const DenseLabels& truth);

struct TrainingOutput {
    std::vector<MetricsRecord> history;
    TrainState final_state;
    double final_miou = 0.0;
    std::string metrics_path;
    std::string checkpoint_path;
};

using StepObserver = std::function<void(long step, const TrainState& before,
                                        const TrainState& after, const StepTrace& trace)>;

/// Runs the full pipeline over the dataset, appending one CSV row per train
/// step and one per evaluation. Rows are flushed as written so a partial
/// history survives failures. In deterministic mode the seconds column is
/// written as 0 and all work runs on one thread.
TrainingOutput run_training(const TrainConfig& config, const Dataset& dataset,
                            const std::string& out_dir,
                            const StepObserver& observer = nullptr);

std::vector<MetricsRecord> read_metrics_csv(const std::string& path);
extern const char* kMetricsCsvHeader;

/// Worker cap for non-deterministic runs: min(RAC_THREADS, hardware).
int worker_count(bool deterministic);

}  // namespace racseg
