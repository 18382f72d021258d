#include "racseg/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "racseg/runconfig.hpp"

namespace racseg::cli {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void require_input_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw ArgumentError(std::string(what) + " not found: " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError("cannot write " + path);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
    require_input_file(config_path, "config file");
    const RunConfig cfg = load_run_config(config_path);
    const DatasetManifest manifest =
        make_dataset(cfg.scene, cfg.n_train, cfg.n_test, cfg.clicks, out_dir);
    write_text_file((fs::path(out_dir) / "config.canonical").string(),
                    canonical_run_config(cfg));
    std::cout << "manifest " << manifest.manifest_path << '\n';
    std::cout << "label_fraction " << format_double(manifest.label_fraction) << '\n';
    return kExitOk;
}

struct TrainOverrides {
    std::optional<double> tau, kappa, lambda1, lambda2, lambda3;
    std::optional<int> k_views;
    std::optional<std::string> reliable_loss, ambiguous_loss;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
};

void apply_overrides(TrainConfig& train, const TrainOverrides& ov) {
    if (ov.tau) train.tau = *ov.tau;
    if (ov.kappa) train.kappa = *ov.kappa;
    if (ov.lambda1) train.lambda1 = *ov.lambda1;
    if (ov.lambda2) train.lambda2 = *ov.lambda2;
    if (ov.lambda3) train.lambda3 = *ov.lambda3;
    if (ov.k_views) {
        // Views beyond the configured list repeat the default pair.
        std::vector<AugMethod> methods;
        const std::vector<AugMethod> base = train.augment.methods;
        for (int k = 0; k < *ov.k_views; ++k)
            methods.push_back(base[static_cast<std::size_t>(k) % base.size()]);
        train.augment.methods = std::move(methods);
    }
    if (ov.reliable_loss)
        train.reliable_loss = *ov.reliable_loss == "dice" ? ReliableLossKind::Dice
                                                          : ReliableLossKind::CrossEntropy;
    if (ov.ambiguous_loss)
        train.ambiguous_loss =
            *ov.ambiguous_loss == "mse" ? AmbiguousLossKind::MSE : AmbiguousLossKind::KL;
    if (ov.seed) train.seed = *ov.seed;
    if (ov.deterministic) train.deterministic = true;
    if (!(train.tau > 0.0 && train.tau < 1.0))
        throw ArgumentError("--tau must lie in (0, 1)");
    if (!(train.kappa >= 0.0)) throw ArgumentError("--kappa must be >= 0");
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& out_dir, const TrainOverrides& overrides) {
    require_input_file(config_path, "config file");
    require_input_file(manifest_path, "manifest");
    RunConfig cfg = load_run_config(config_path);
    apply_overrides(cfg.train, overrides);

    const DatasetManifest manifest = load_manifest(manifest_path);
    const Dataset dataset = load_dataset(manifest, cfg.train.knn);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    write_text_file((fs::path(out_dir) / "config.canonical").string(),
                    canonical_run_config(cfg));

    const TrainingOutput output = run_training(cfg.train, dataset, out_dir);
    std::cout << "metrics " << output.metrics_path << '\n';
    std::cout << "checkpoint " << output.checkpoint_path << '\n';
    if (std::isfinite(output.final_miou))
        std::cout << "final_miou " << format_double(output.final_miou) << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
             const std::string& split, const std::string& dump_dir, double tau, double kappa,
             int k_views, std::uint64_t seed) {
    require_input_file(checkpoint_path, "checkpoint");
    require_input_file(manifest_path, "manifest");
    auto [params, knn] = load_checkpoint(checkpoint_path);
    const DatasetManifest manifest = load_manifest(manifest_path);
    const Dataset dataset = load_dataset(manifest, knn);

    const std::vector<SceneData>& scenes = split == "train" ? dataset.train : dataset.test;
    if (scenes.empty()) throw ArgumentError("no scenes in split '" + split + "'");
    std::vector<const SceneData*> ptrs;
    for (const auto& s : scenes) ptrs.push_back(&s);

    const EvalResult result = evaluate(params, ptrs);
    std::cout << "miou " << format_double(result.miou) << '\n';
    for (std::size_t c = 0; c < result.per_class_iou.size(); ++c) {
        std::cout << "iou_class_" << c << ' ';
        if (result.class_in_truth[c])
            std::cout << format_double(result.per_class_iou[c]);
        else
            std::cout << "absent";
        std::cout << '\n';
    }

    if (!dump_dir.empty()) {
        // Ascii masks: one "index reliable pseudo_class" line per point.
        std::error_code ec;
        fs::create_directories(dump_dir, ec);
        if (ec) throw IoError("cannot create dump directory: " + dump_dir);
        AugmentationSpec spec;
        std::vector<AugMethod> methods;
        for (int k = 0; k < k_views; ++k)
            methods.push_back(k % 2 == 0 ? AugMethod::PointWolf : AugMethod::Affine);
        spec.methods = std::move(methods);
        Rng seeder(seed);
        for (const auto* scene : ptrs) {
            spec.rng_seed = seeder();
            const auto views = gen_augmented_views(scene->cloud, spec);
            auto [logits, tape] = forward(params, scene->cloud, scene->neighbors);
            (void)tape;
            const Mat p = probabilities(logits);
            std::vector<Mat> p_aug;
            for (const auto& view : views) {
                auto [vlogits, vtape] = forward(params, view, scene->neighbors);
                (void)vtape;
                p_aug.push_back(probabilities(vlogits));
            }
            const Mat mean = mean_prediction(p, p_aug);
            const Mat dev = uncertainty(p, p_aug, mean);
            const ReliabilityPartition part = partition(p, mean, dev, tau, kappa);
            std::ofstream out(fs::path(dump_dir) / (scene->id + ".mask"));
            if (!out) throw IoError("cannot write mask dump for scene " + scene->id);
            for (Eigen::Index i = 0; i < scene->cloud.n_points(); ++i) {
                std::int64_t cls = -1;
                if (part.mask[static_cast<std::size_t>(i)]) {
                    Eigen::Index best = 0;
                    part.one_hot.row(i).maxCoeff(&best);
                    cls = static_cast<std::int64_t>(best);
                }
                out << i << ' ' << (part.mask[static_cast<std::size_t>(i)] ? 1 : 0) << ' '
                    << cls << '\n';
            }
        }
        std::cout << "dumped " << ptrs.size() << " masks to " << dump_dir << '\n';
    }
    return kExitOk;
}

int cmd_augment(const std::string& method, const std::string& in_path,
                const std::string& in2_path, const std::string& out_path,
                const std::string& format_name, const AffineParams& affine,
                const NoiseParams& noise, const PointWolfParams& pointwolf, std::uint64_t seed,
                std::optional<double> alpha_const) {
    require_input_file(in_path, "input cloud");
    const CloudFormat format =
        format_name == "ascii" ? CloudFormat::AsciiXyz : CloudFormat::Binary;
    LoadedCloud input = load_cloud(in_path, format);
    Rng rng(seed);

    std::optional<PointCloud> result;
    if (method == "affine") {
        result = affine_transform(input.cloud, affine);
    } else if (method == "noise") {
        result = pointwise_noise(input.cloud, noise, rng);
    } else if (method == "pointwolf") {
        result = pointwolf_deform(input.cloud, pointwolf, rng);
    } else if (method == "mix") {
        if (in2_path.empty()) throw ArgumentError("mix requires --in2");
        require_input_file(in2_path, "second input cloud");
        LoadedCloud second = load_cloud(in2_path, format);
        if (alpha_const) {
            if (*alpha_const < 0.0 || *alpha_const > 1.0)
                throw ArgumentError("--alpha-const must lie in [0, 1]");
            Vec alpha = Vec::Constant(input.cloud.n_points(), *alpha_const);
            result = mix_augment_with_alpha(input.cloud, second.cloud, std::move(alpha)).cloud;
        } else {
            result = mix_augment(input.cloud, second.cloud, rng).cloud;
        }
    } else {
        throw ArgumentError("unknown augment method '" + method + "'");
    }

    save_cloud(*result, input.labels, out_path, format);
    std::cout << "wrote " << out_path << '\n';
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& csv_paths, const std::string& out_prefix) {
    if (csv_paths.empty()) throw ArgumentError("report needs at least one metrics file");

    struct Run {
        std::string name;
        std::vector<MetricsRecord> records;
    };
    std::vector<Run> runs;
    std::set<std::string> used_names;
    for (const auto& path : csv_paths) {
        require_input_file(path, "metrics file");
        Run run;
        run.name = fs::path(path).parent_path().filename().string();
        if (run.name.empty()) run.name = fs::path(path).stem().string();
        while (used_names.count(run.name)) run.name += "_";
        used_names.insert(run.name);
        run.records = read_metrics_csv(path);
        runs.push_back(std::move(run));
    }

    // Final-mIoU summary: the last eval row of each run.
    std::cout << "run\tfinal_miou\n";
    std::vector<std::pair<std::string, double>> summary;
    for (const auto& run : runs) {
        double miou = std::numeric_limits<double>::quiet_NaN();
        for (const auto& rec : run.records)
            if (rec.is_eval_row && rec.miou) miou = *rec.miou;
        summary.emplace_back(run.name, miou);
        std::cout << run.name << '\t' << format_double(miou) << '\n';
    }

    if (!out_prefix.empty()) {
        // Aligned-by-step pseudo-label curves across runs.
        std::set<long> steps;
        std::vector<std::map<long, const MetricsRecord*>> by_step(runs.size());
        for (std::size_t r = 0; r < runs.size(); ++r)
            for (const auto& rec : runs[r].records)
                if (!rec.is_eval_row) {
                    steps.insert(rec.step);
                    by_step[r][rec.step] = &rec;
                }

        const std::string curves_path = out_prefix + "_curves.csv";
        std::ofstream curves(curves_path);
        if (!curves) throw IoError("cannot write " + curves_path);
        curves << "step";
        for (const auto& run : runs)
            curves << ',' << run.name << "_pl_acc," << run.name << "_reliable_count";
        curves << '\n';
        for (const auto step : steps) {
            curves << step;
            for (std::size_t r = 0; r < runs.size(); ++r) {
                const auto it = by_step[r].find(step);
                if (it == by_step[r].end()) {
                    curves << ",,";
                } else {
                    curves << ',' << format_double(it->second->pl_acc) << ','
                           << it->second->reliable_count;
                }
            }
            curves << '\n';
        }
        if (!curves) throw IoError("write failure: " + curves_path);

        const std::string summary_path = out_prefix + "_summary.csv";
        std::ofstream sf(summary_path);
        if (!sf) throw IoError("cannot write " + summary_path);
        sf << "run,final_miou\n";
        for (const auto& [name, miou] : summary) sf << name << ',' << format_double(miou) << '\n';
        if (!sf) throw IoError("write failure: " + summary_path);
        std::cout << "curves " << curves_path << '\n';
        std::cout << "summary " << summary_path << '\n';
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv) {
    CLI::App app{"reliability-adaptive consistency training for weakly-supervised point cloud "
                 "segmentation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic labeled dataset");
    std::string gen_config, gen_out;
    gen->add_option("--config", gen_config, "run config file")->required();
    gen->add_option("--out", gen_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train on a dataset manifest");
    std::string train_config, train_manifest, train_out;
    TrainOverrides ov;
    double ov_tau = 0, ov_kappa = 0, ov_l1 = 0, ov_l2 = 0, ov_l3 = 0;
    int ov_k = 0;
    std::uint64_t ov_seed = 0;
    std::string ov_rel, ov_amb;
    train->add_option("--config", train_config, "run config file")->required();
    train->add_option("--manifest", train_manifest, "dataset manifest")->required();
    train->add_option("--out", train_out, "output directory")->required();
    auto* tau_opt = train->add_option("--tau", ov_tau, "confidence threshold");
    auto* kappa_opt = train->add_option("--kappa", ov_kappa, "uncertainty threshold");
    auto* k_opt = train->add_option("--k", ov_k, "number of augmented views");
    auto* l1_opt = train->add_option("--lambda1", ov_l1, "weight of the reliable loss");
    auto* l2_opt = train->add_option("--lambda2", ov_l2, "weight of the ambiguous loss");
    auto* l3_opt = train->add_option("--lambda3", ov_l3, "weight of the mix loss");
    auto* rel_opt = train->add_option("--reliable-loss", ov_rel, "ce|dice")
                        ->check(CLI::IsMember({"ce", "dice"}));
    auto* amb_opt = train->add_option("--ambiguous-loss", ov_amb, "kl|mse")
                        ->check(CLI::IsMember({"kl", "mse"}));
    auto* seed_opt = train->add_option("--seed", ov_seed, "training seed");
    bool ov_det = false;
    train->add_flag("--deterministic", ov_det, "single-threaded run with fixed reductions");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_manifest, eval_split = "test", eval_dump;
    double eval_tau = 0.7, eval_kappa = 0.05;
    int eval_k = 2;
    std::uint64_t eval_seed = 0;
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
    eval->add_option("--split", eval_split, "train|test")
        ->check(CLI::IsMember({"train", "test"}));
    eval->add_option("--dump-partitions", eval_dump, "write ascii partition masks here");
    eval->add_option("--tau", eval_tau, "confidence threshold for the dump");
    eval->add_option("--kappa", eval_kappa, "uncertainty threshold for the dump");
    eval->add_option("--k", eval_k, "augmented views for the dump");
    eval->add_option("--seed", eval_seed, "augmentation seed for the dump");

    // augment
    auto* aug = app.add_subcommand("augment", "apply one augmentation to a cloud file");
    std::string aug_method, aug_in, aug_in2, aug_out, aug_format = "binary";
    AffineParams affine;
    NoiseParams noise;
    PointWolfParams pointwolf;
    std::uint64_t aug_seed = 0;
    double aug_alpha_const = -1.0;
    aug->add_option("--method", aug_method, "affine|noise|pointwolf|mix")
        ->required()
        ->check(CLI::IsMember({"affine", "noise", "pointwolf", "mix"}));
    aug->add_option("--in", aug_in, "input cloud")->required();
    aug->add_option("--in2", aug_in2, "second input (mix)");
    aug->add_option("--out", aug_out, "output cloud")->required();
    aug->add_option("--format", aug_format, "ascii|binary")
        ->check(CLI::IsMember({"ascii", "binary"}));
    aug->add_option("--angle", affine.rotation_angle, "affine rotation (radians)");
    aug->add_option("--scale", affine.scale, "affine scale");
    double tx = 0, ty = 0, tz = 0;
    aug->add_option("--tx", tx, "affine translation x");
    aug->add_option("--ty", ty, "affine translation y");
    aug->add_option("--tz", tz, "affine translation z");
    aug->add_option("--sigma", noise.sigma, "noise sigma");
    aug->add_option("--clip", noise.clip, "noise clip");
    aug->add_option("--anchors", pointwolf.n_anchors, "pointwolf anchors");
    aug->add_option("--bandwidth", pointwolf.kernel_bandwidth, "pointwolf kernel bandwidth");
    aug->add_option("--rot-max-deg", pointwolf.rotation_max_deg, "pointwolf rotation bound");
    aug->add_option("--scale-min", pointwolf.scale_min, "pointwolf scale min");
    aug->add_option("--scale-max", pointwolf.scale_max, "pointwolf scale max");
    aug->add_option("--trans-max", pointwolf.translation_max, "pointwolf translation bound");
    aug->add_option("--seed", aug_seed, "rng seed");
    auto* alpha_opt = aug->add_option("--alpha-const", aug_alpha_const,
                                      "force a constant mix coefficient");

    // report
    auto* report = app.add_subcommand("report", "compare metrics files");
    std::vector<std::string> report_csvs;
    std::string report_out;
    report->add_option("csvs", report_csvs, "metrics CSV files")->required();
    report->add_option("--out", report_out, "prefix for plot-data files");

    std::vector<const char*> cargs;
    cargs.push_back("racseg");
    for (const auto& a : argv) cargs.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_config, gen_out);
        if (train->parsed()) {
            if (*tau_opt) ov.tau = ov_tau;
            if (*kappa_opt) ov.kappa = ov_kappa;
            if (*k_opt) ov.k_views = ov_k;
            if (*l1_opt) ov.lambda1 = ov_l1;
            if (*l2_opt) ov.lambda2 = ov_l2;
            if (*l3_opt) ov.lambda3 = ov_l3;
            if (*rel_opt) ov.reliable_loss = ov_rel;
            if (*amb_opt) ov.ambiguous_loss = ov_amb;
            if (*seed_opt) ov.seed = ov_seed;
            ov.deterministic = ov_det;
            return cmd_train(train_config, train_manifest, train_out, ov);
        }
        if (eval->parsed())
            return cmd_eval(eval_ckpt, eval_manifest, eval_split, eval_dump, eval_tau,
                            eval_kappa, eval_k, eval_seed);
        if (aug->parsed()) {
            affine.translation = Eigen::Vector3d(tx, ty, tz);
            std::optional<double> alpha_const;
            if (*alpha_opt) alpha_const = aug_alpha_const;
            return cmd_augment(aug_method, aug_in, aug_in2, aug_out, aug_format, affine, noise,
                               pointwolf, aug_seed, alpha_const);
        }
        if (report->parsed()) return cmd_report(report_csvs, report_out);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace racseg::cli
