#include "racseg/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace racseg {

namespace fs = std::filesystem;

const char* kMetricsCsvHeader =
    "step,seg,rel,amb,mix,total,reliable_count,reliable_frac,pl_acc,miou,secs";

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

Rng derive_rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

constexpr std::uint64_t kTagShuffle = 1;
constexpr std::uint64_t kTagStep = 2;

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index writes
/// only its own output slot, so results do not depend on the schedule.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    pool.reserve(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& t : pool) t.join();
}

/// Pre-drawn randomness for one scene of one step; drawing everything up
/// front keeps results identical across worker counts.
struct SceneDraws {
    std::uint64_t aug_seed = 0;
    int view_m = 0, view_n = 0;  // -1 = original cloud
    std::uint64_t alpha_seed = 0;
};

SceneDraws draw_scene_randomness(int k_views, Rng& rng) {
    SceneDraws d;
    d.aug_seed = rng();
    if (k_views >= 2) {
        std::uniform_int_distribution<int> first(0, k_views - 1);
        std::uniform_int_distribution<int> second(0, k_views - 2);
        d.view_m = first(rng);
        const int r = second(rng);
        d.view_n = r >= d.view_m ? r + 1 : r;
    } else {
        d.view_m = 0;
        d.view_n = -1;
    }
    d.alpha_seed = rng();
    return d;
}

struct SceneResult {
    LossReport report;
    ParamGrads grads;
    long reliable_count = 0;
    long n_points = 0;
    long pl_correct = 0;
    SceneTrace trace;
};

SceneResult process_scene(const TrainState& state, const SceneData& scene,
                          const TrainConfig& config, const SceneDraws& draws, bool want_trace) {
    SceneResult result;
    const int k_views = config.k_views();

    AugmentationSpec spec = config.augment;
    spec.rng_seed = draws.aug_seed;
    const std::vector<PointCloud> views = gen_augmented_views(scene.cloud, spec);

    auto [logits_orig, tape_orig] = forward(state.params, scene.cloud, scene.neighbors);
    std::vector<Mat> aug_logits;
    std::vector<ForwardTape> aug_tapes;
    aug_logits.reserve(views.size());
    aug_tapes.reserve(views.size());
    for (const auto& view : views) {
        auto [logits, tape] = forward(state.params, view, scene.neighbors);
        aug_logits.push_back(std::move(logits));
        aug_tapes.push_back(std::move(tape));
    }

    const Mat p_orig = probabilities(logits_orig);
    std::vector<Mat> p_aug;
    p_aug.reserve(aug_logits.size());
    for (const auto& logits : aug_logits) p_aug.push_back(probabilities(logits));

    const Mat mean = mean_prediction(p_orig, p_aug);
    const Mat dev = uncertainty(p_orig, p_aug, mean);
    const ReliabilityPartition part = partition(p_orig, mean, dev, config.tau, config.kappa);

    Mask ambiguous(part.mask.size());
    for (std::size_t i = 0; i < part.mask.size(); ++i) ambiguous[i] = part.mask[i] ? 0 : 1;

    LossReport report;
    report.lambdas = {config.lambda1, config.lambda2, config.lambda3};

    const LossValueGrad seg = seg_loss(logits_orig, scene.clicks);
    report.seg = seg.value;
    report.grad_original = seg.grad;

    const LossValueGrads rel = config.reliable_loss == ReliableLossKind::CrossEntropy
                                   ? reliable_loss(part.one_hot, part.mask, aug_logits)
                                   : dice_loss(part.one_hot, part.mask, aug_logits);
    const LossValueGrads amb = config.ambiguous_loss == AmbiguousLossKind::KL
                                   ? ambiguous_loss(part.soft, ambiguous, aug_logits)
                                   : mse_loss(part.soft, ambiguous, aug_logits);
    report.reliable = rel.value;
    report.ambiguous = amb.value;

    Mat mix_logits;
    ForwardTape mix_tape;
    if (config.lambda3 != 0.0) {
        const PointCloud& m_view = draws.view_m >= 0 ? views[static_cast<std::size_t>(
                                                           draws.view_m)]
                                                     : scene.cloud;
        const PointCloud& n_view = draws.view_n >= 0 ? views[static_cast<std::size_t>(
                                                           draws.view_n)]
                                                     : scene.cloud;
        Rng alpha_rng(draws.alpha_seed);
        const MixSample mix = mix_augment(m_view, n_view, alpha_rng);
        std::tie(mix_logits, mix_tape) = forward(state.params, mix.cloud, scene.neighbors);
        const LossValueGrad mix_result = mix_loss(part.one_hot, part.mask, mix_logits);
        report.mix = mix_result.value;
        report.grad_mix = config.lambda3 * mix_result.grad;
    }

    report.total = total_loss(report.seg, report.reliable, report.ambiguous, report.mix,
                              config.lambda1, config.lambda2, config.lambda3);
    if (!std::isfinite(report.total))
        throw TrainingError("non-finite loss on scene " + scene.id);

    // Branch gradients; a branch whose weights are all zero contributes
    // nothing, keeping degenerate configs bit-identical to reduced pipelines.
    result.grads = backward(tape_orig, report.grad_original);
    report.grads_augmented.resize(static_cast<std::size_t>(k_views));
    for (int k = 0; k < k_views; ++k) {
        const bool use_rel = config.lambda1 != 0.0;
        const bool use_amb = config.lambda2 != 0.0;
        if (!use_rel && !use_amb) continue;
        Mat cot;
        if (use_rel && use_amb)
            cot = config.lambda1 * rel.grads[static_cast<std::size_t>(k)] +
                  config.lambda2 * amb.grads[static_cast<std::size_t>(k)];
        else if (use_rel)
            cot = config.lambda1 * rel.grads[static_cast<std::size_t>(k)];
        else
            cot = config.lambda2 * amb.grads[static_cast<std::size_t>(k)];
        report.grads_augmented[static_cast<std::size_t>(k)] = cot;
        result.grads += backward(aug_tapes[static_cast<std::size_t>(k)], cot);
    }
    if (config.lambda3 != 0.0) result.grads += backward(mix_tape, report.grad_mix);

    result.report = std::move(report);
    result.reliable_count = part.reliable_count();
    result.n_points = scene.cloud.n_points();
    for (Eigen::Index i = 0; i < scene.cloud.n_points(); ++i) {
        if (!part.mask[static_cast<std::size_t>(i)]) continue;
        Eigen::Index pred = 0;
        part.one_hot.row(i).maxCoeff(&pred);
        if (!scene.dense.class_per_point.empty() &&
            scene.dense.class_per_point[static_cast<std::size_t>(i)] ==
                static_cast<std::int64_t>(pred))
            ++result.pl_correct;
    }

    if (want_trace) {
        result.trace.scene_id = scene.id;
        result.trace.mask = part.mask;
        result.trace.one_hot = part.one_hot;
        result.trace.original = p_orig;
        result.trace.mean = mean;
        result.trace.view_m = draws.view_m;
        result.trace.view_n = draws.view_n;
    }
    return result;
}

int infer_n_classes(const Dataset& dataset) {
    std::int64_t max_class = -1;
    auto scan = [&](const std::vector<SceneData>& scenes) {
        for (const auto& s : scenes) {
            for (const auto c : s.dense.class_per_point) max_class = std::max(max_class, c);
            for (const auto& e : s.clicks.entries) max_class = std::max(max_class, e.class_id);
        }
    };
    scan(dataset.train);
    scan(dataset.test);
    if (max_class < 1) throw ArgumentError("dataset does not define at least 2 classes");
    return static_cast<int>(max_class) + 1;
}

}  // namespace

int worker_count(bool deterministic) {
    if (deterministic) return 1;
    int count = static_cast<int>(std::thread::hardware_concurrency());
    if (count < 1) count = 1;
    if (const char* env = std::getenv("RAC_THREADS")) {
        char* end = nullptr;
        const long parsed = std::strtol(env, &end, 10);
        if (end != env && parsed >= 1) count = std::min<long>(count, parsed);
    }
    return count;
}

Dataset load_dataset(const DatasetManifest& manifest, int knn) {
    Dataset dataset;
    const fs::path base = fs::path(manifest.manifest_path).parent_path();
    for (const auto& entry : manifest.scenes) {
        const std::string cloud_path = (base / entry.cloud_path).string();
        LoadedCloud loaded = load_cloud(cloud_path, CloudFormat::Binary);

        SceneData scene{fs::path(entry.cloud_path).stem().string(), std::move(loaded.cloud),
                        loaded.labels.value_or(DenseLabels{}), SparseLabels{}, IndexMat{}};

        const std::string clicks_path = (base / entry.clicks_path).string();
        std::ifstream cf(clicks_path);
        if (!cf) throw IoError("cannot open clicks file: " + clicks_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(cf, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            SparseLabels::Entry e{};
            if (!(ls >> e.point_index >> e.class_id))
                throw ParseError(clicks_path + ":" + std::to_string(line_no) +
                                 ": expected 'point_index class_id'");
            scene.clicks.entries.push_back(e);
        }
        scene.neighbors =
            knn_indices(scene.cloud, std::min<int>(knn, static_cast<int>(scene.cloud.n_points())));

        (entry.split == "train" ? dataset.train : dataset.test).push_back(std::move(scene));
    }
    if (dataset.train.empty()) throw ArgumentError("dataset has no training scenes");
    return dataset;
}

std::pair<TrainState, MetricsRecord> train_step(const TrainState& state,
                                                const std::vector<const SceneData*>& batch,
                                                const TrainConfig& config, Rng& rng,
                                                StepTrace* trace) {
    if (batch.empty()) throw ArgumentError("train_step: empty batch");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<SceneDraws> draws;
    draws.reserve(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s)
        draws.push_back(draw_scene_randomness(config.k_views(), rng));

    std::vector<SceneResult> results(batch.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(batch.size(), worker_count(config.deterministic), [&](std::size_t s) {
        try {
            results[s] = process_scene(state, *batch[s], config, draws[s], trace != nullptr);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);

    ParamGrads batch_grads = ParamGrads::zeros_like(state.params);
    MetricsRecord rec;
    long reliable_total = 0, points_total = 0, pl_correct = 0;
    for (const auto& r : results) {
        batch_grads += r.grads;
        rec.seg += r.report.seg;
        rec.rel += r.report.reliable;
        rec.amb += r.report.ambiguous;
        rec.mix += r.report.mix;
        rec.total += r.report.total;
        reliable_total += r.reliable_count;
        points_total += r.n_points;
        pl_correct += r.pl_correct;
    }
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    batch_grads *= inv_batch;
    rec.seg *= inv_batch;
    rec.rel *= inv_batch;
    rec.amb *= inv_batch;
    rec.mix *= inv_batch;
    rec.total *= inv_batch;
    rec.reliable_count = reliable_total;
    rec.reliable_frac = static_cast<double>(reliable_total) / static_cast<double>(points_total);
    if (reliable_total > 0) {
        rec.pl_acc = static_cast<double>(pl_correct) / static_cast<double>(reliable_total);
    } else {
        rec.pl_acc = 1.0;
        rec.pl_acc_on_empty = true;
    }

    TrainState next = sgd_step(state, batch_grads);
    rec.step = next.step;
    rec.secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (trace) {
        trace->scenes.clear();
        for (auto& r : results) trace->scenes.push_back(std::move(r.trace));
    }
    return {std::move(next), std::move(rec)};
}

EvalResult evaluate(const ModelParams& params, const std::vector<const SceneData*>& scenes) {
    if (scenes.empty()) throw ArgumentError("evaluate: no scenes");
    const auto n_classes = params.n_classes();
    std::vector<long long> tp(static_cast<std::size_t>(n_classes), 0);
    std::vector<long long> fp(static_cast<std::size_t>(n_classes), 0);
    std::vector<long long> fn(static_cast<std::size_t>(n_classes), 0);

    for (const auto* scene : scenes) {
        if (scene->dense.class_per_point.empty())
            throw ArgumentError("evaluate: scene " + scene->id + " has no ground truth");
        auto [logits, tape] = forward(params, scene->cloud, scene->neighbors);
        (void)tape;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            Eigen::Index pred = 0;
            logits.row(i).maxCoeff(&pred);
            const auto truth = scene->dense.class_per_point[static_cast<std::size_t>(i)];
            if (truth < 0 || truth >= n_classes)
                throw ArgumentError("evaluate: ground-truth class out of range");
            if (pred == truth) {
                ++tp[static_cast<std::size_t>(truth)];
            } else {
                ++fp[static_cast<std::size_t>(pred)];
                ++fn[static_cast<std::size_t>(truth)];
            }
        }
    }

    EvalResult result;
    result.per_class_iou.assign(static_cast<std::size_t>(n_classes),
                                std::numeric_limits<double>::quiet_NaN());
    result.class_in_truth.assign(static_cast<std::size_t>(n_classes), false);
    double sum = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < static_cast<std::size_t>(n_classes); ++c) {
        if (tp[c] + fn[c] == 0) continue;  // class absent from ground truth
        result.class_in_truth[c] = true;
        const double iou =
            static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c] + fn[c]);
        result.per_class_iou[c] = iou;
        sum += iou;
        ++present;
    }
    result.miou = present > 0 ? sum / present : 0.0;
    return result;
}

PseudoLabelStats pseudo_label_stats(const ReliabilityPartition& part, const DenseLabels& truth) {
    if (truth.size() != part.mask.size())
        throw ArgumentError("pseudo_label_stats: truth does not cover the scene");
    PseudoLabelStats stats;
    long correct = 0;
    for (std::size_t i = 0; i < part.mask.size(); ++i) {
        if (!part.mask[i]) continue;
        ++stats.count;
        Eigen::Index pred = 0;
        part.one_hot.row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
        if (truth.class_per_point[i] == static_cast<std::int64_t>(pred)) ++correct;
    }
    if (stats.count == 0) {
        stats.accuracy = 1.0;
        stats.empty_set = true;
    } else {
        stats.accuracy = static_cast<double>(correct) / static_cast<double>(stats.count);
    }
    return stats;
}

namespace {

void write_csv_row(std::ofstream& out, const MetricsRecord& rec, bool deterministic) {
    const std::string secs = deterministic ? "0" : format_double(rec.secs);
    if (rec.is_eval_row) {
        out << rec.step << ",,,,,,,,," << format_double(rec.miou.value()) << ',' << secs << '\n';
    } else {
        out << rec.step << ',' << format_double(rec.seg) << ',' << format_double(rec.rel) << ','
            << format_double(rec.amb) << ',' << format_double(rec.mix) << ','
            << format_double(rec.total) << ',' << rec.reliable_count << ','
            << format_double(rec.reliable_frac) << ',' << format_double(rec.pl_acc) << ",,"
            << secs << '\n';
    }
    out.flush();
}

}  // namespace

TrainingOutput run_training(const TrainConfig& config, const Dataset& dataset,
                            const std::string& out_dir, const StepObserver& observer) {
    if (config.epochs < 1 || config.batch_size < 1)
        throw ArgumentError("train config: epochs and batch size must be >= 1");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);

    const int n_classes = infer_n_classes(dataset);
    const auto input_dim = 3 + dataset.train.front().cloud.feature_dim();
    TrainState state = make_train_state(
        init_params(input_dim, config.hidden, n_classes, config.seed), config.learning_rate,
        config.momentum);

    TrainingOutput output;
    output.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    output.checkpoint_path = (fs::path(out_dir) / "model.ckpt").string();
    std::ofstream csv(output.metrics_path);
    if (!csv) throw IoError("cannot write metrics: " + output.metrics_path);
    csv << kMetricsCsvHeader << '\n';
    csv.flush();

    std::vector<const SceneData*> test_ptrs;
    for (const auto& s : dataset.test) test_ptrs.push_back(&s);

    std::vector<std::size_t> order(dataset.train.size());
    std::iota(order.begin(), order.end(), 0);

    const long steps_per_epoch =
        static_cast<long>((dataset.train.size() + static_cast<std::size_t>(config.batch_size) -
                           1) /
                          static_cast<std::size_t>(config.batch_size));
    const long total_steps = steps_per_epoch * config.epochs;

    long global_step = 0;
    output.final_miou = std::numeric_limits<double>::quiet_NaN();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng = derive_rng(config.seed, kTagShuffle, static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::vector<const SceneData*> batch;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
                 ++i)
                batch.push_back(&dataset.train[order[i]]);

            Rng step_rng =
                derive_rng(config.seed, kTagStep, static_cast<std::uint64_t>(global_step));
            StepTrace trace;
            const TrainState before = state;
            auto [next, rec] = train_step(state, batch, config, step_rng,
                                          observer ? &trace : nullptr);
            state = std::move(next);
            ++global_step;
            write_csv_row(csv, rec, config.deterministic);
            output.history.push_back(rec);
            if (observer) observer(global_step, before, state, trace);

            const bool last = global_step == total_steps;
            if (!test_ptrs.empty() &&
                (global_step % config.eval_interval == 0 || last)) {
                const auto t0 = std::chrono::steady_clock::now();
                const EvalResult eval = evaluate(state.params, test_ptrs);
                MetricsRecord eval_rec;
                eval_rec.step = global_step;
                eval_rec.is_eval_row = true;
                eval_rec.miou = eval.miou;
                eval_rec.secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                write_csv_row(csv, eval_rec, config.deterministic);
                output.history.push_back(eval_rec);
                output.final_miou = eval.miou;
            }
        }
    }

    csv.close();
    save_checkpoint(state.params, config.knn, output.checkpoint_path);
    output.final_state = std::move(state);
    return output;
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("empty metrics file: " + path);
    if (header != kMetricsCsvHeader) {
        // Name the first column that deviates from the schema.
        std::istringstream expect(kMetricsCsvHeader), got(header);
        std::string e, g;
        while (std::getline(expect, e, ',')) {
            if (!std::getline(got, g, ',') || g != e)
                throw ParseError("metrics schema mismatch in " + path + ": expected column '" +
                                 e + "'");
        }
        throw ParseError("metrics schema mismatch in " + path + ": unexpected extra columns");
    }

    std::vector<MetricsRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        while (fields.size() < 11) fields.push_back("");
        auto num = [](const std::string& s) { return s.empty() ? 0.0 : std::stod(s); };
        MetricsRecord rec;
        rec.step = std::stol(fields[0]);
        rec.is_eval_row = fields[1].empty() && !fields[9].empty();
        rec.seg = num(fields[1]);
        rec.rel = num(fields[2]);
        rec.amb = num(fields[3]);
        rec.mix = num(fields[4]);
        rec.total = num(fields[5]);
        rec.reliable_count = fields[6].empty() ? 0 : std::stol(fields[6]);
        rec.reliable_frac = num(fields[7]);
        rec.pl_acc = num(fields[8]);
        if (!fields[9].empty()) rec.miou = std::stod(fields[9]);
        rec.secs = num(fields[10]);
        records.push_back(rec);
    }
    return records;
}

}  // namespace racseg
