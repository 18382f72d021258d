#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "racseg/cli.hpp"
#include "racseg/runconfig.hpp"

using namespace racseg;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("racseg_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string write_config(const std::string& dir, const std::string& extra = "") {
    const std::string path = (fs::path(dir) / "run.cfg").string();
    std::ofstream out(path);
    out << "scene.n_points = 96\n"
           "scene.objects_min = 6\n"
           "scene.objects_max = 6\n"
           "data.n_train = 2\n"
           "data.n_test = 1\n"
           "train.epochs = 1\n"
           "train.hidden = 8\n"
           "train.knn = 6\n"
           "train.eval_interval = 1\n"
           "train.deterministic = true\n";
    out << extra;
    return path;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("config parsing is strict about unknown keys") {
    CHECK_THROWS_AS(parse_run_config("klick_scheme = 3\n"), ParseError);
    try {
        parse_run_config("klick_scheme = 3\n");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("klick_scheme") != std::string::npos);
    }
}

TEST_CASE("config canonicalization is idempotent") {
    const RunConfig defaults{};
    RunConfig seeded = defaults;
    seeded.scene.palette = default_palette();
    const std::string canon = canonical_run_config(seeded);
    const RunConfig reparsed = parse_run_config(canon);
    CHECK(canonical_run_config(reparsed) == canon);

    // A sparse config round-trips through the canonical form too.
    const RunConfig from_text = parse_run_config("train.lr = 0.05\nscene.extent = 4.25\n");
    const std::string canon2 = canonical_run_config(from_text);
    CHECK(canonical_run_config(parse_run_config(canon2)) == canon2);
    CHECK(canon2.find("train.lr = 0.05") != std::string::npos);
    CHECK(canon2.find("scene.extent = 4.25") != std::string::npos);
}

TEST_CASE("gen-data creates a manifest and is deterministic per seed") {
    const std::string dir = fresh_dir("gen");
    const std::string config = write_config(dir);
    const std::string out_a = dir + "/data_a";
    const std::string out_b = dir + "/data_b";
    CHECK(cli::run({"gen-data", "--config", config, "--out", out_a}) == 0);
    CHECK(cli::run({"gen-data", "--config", config, "--out", out_b}) == 0);
    CHECK(fs::exists(out_a + "/manifest.tsv"));
    CHECK(read_file(out_a + "/manifest.tsv") == read_file(out_b + "/manifest.tsv"));
    CHECK(read_file(out_a + "/scene_000.rpc") == read_file(out_b + "/scene_000.rpc"));
}

TEST_CASE("gen-data rejects configs with unknown keys") {
    const std::string dir = fresh_dir("gen_bad");
    const std::string config = write_config(dir, "klick_scheme = 1\n");
    CHECK(cli::run({"gen-data", "--config", config, "--out", dir + "/data"}) == 2);
}

TEST_CASE("train fails with exit 2 on a missing manifest") {
    const std::string dir = fresh_dir("train_missing");
    const std::string config = write_config(dir);
    CHECK(cli::run({"train", "--config", config, "--manifest", dir + "/nope.tsv", "--out",
                    dir + "/out"}) == 2);
}

TEST_CASE("train runs end to end and eval reproduces the reported mIoU") {
    const std::string dir = fresh_dir("train_e2e");
    const std::string config = write_config(dir);
    REQUIRE(cli::run({"gen-data", "--config", config, "--out", dir + "/data"}) == 0);
    REQUIRE(cli::run({"train", "--config", config, "--manifest", dir + "/data/manifest.tsv",
                      "--out", dir + "/run", "--seed", "9", "--deterministic"}) == 0);
    CHECK(fs::exists(dir + "/run/metrics.csv"));
    CHECK(fs::exists(dir + "/run/model.ckpt"));
    CHECK(fs::exists(dir + "/run/config.canonical"));

    CHECK(cli::run({"eval", "--checkpoint", dir + "/run/model.ckpt", "--manifest",
                    dir + "/data/manifest.tsv"}) == 0);

    // report summary against the metrics file
    CHECK(cli::run({"report", dir + "/run/metrics.csv", "--out", dir + "/rep"}) == 0);
    CHECK(fs::exists(dir + "/rep_summary.csv"));
    CHECK(fs::exists(dir + "/rep_curves.csv"));

    const auto records = read_metrics_csv(dir + "/run/metrics.csv");
    double last_miou = -1.0;
    for (const auto& rec : records)
        if (rec.is_eval_row && rec.miou) last_miou = *rec.miou;
    const std::string summary = read_file(dir + "/rep_summary.csv");
    std::istringstream lines(summary);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header == "run,final_miou");
    const double reported = std::stod(row.substr(row.find(',') + 1));
    CHECK(reported == doctest::Approx(last_miou).epsilon(1e-12));

    // Cross-check: recompute the final mIoU from the checkpoint.
    auto [params, knn] = load_checkpoint(dir + "/run/model.ckpt");
    const Dataset dataset = load_dataset(load_manifest(dir + "/data/manifest.tsv"), knn);
    std::vector<const SceneData*> test_ptrs;
    for (const auto& s : dataset.test) test_ptrs.push_back(&s);
    const EvalResult recomputed = evaluate(params, test_ptrs);
    CHECK(reported == doctest::Approx(recomputed.miou).epsilon(1e-12));
}

TEST_CASE("report rejects schema mismatches naming the column") {
    const std::string dir = fresh_dir("report_bad");
    const std::string path = dir + "/bad.csv";
    {
        std::ofstream out(path);
        out << "step,seg,rel,amb,mix,total,reliable_count,WRONG,pl_acc,miou,secs\n";
    }
    CHECK(cli::run({"report", path}) == 2);
}

TEST_CASE("augment identity affine is byte-exact through the binary format") {
    const std::string dir = fresh_dir("augment");
    const std::string config = write_config(dir);
    REQUIRE(cli::run({"gen-data", "--config", config, "--out", dir + "/data"}) == 0);
    const std::string in = dir + "/data/scene_000.rpc";
    const std::string out = dir + "/identity.rpc";
    CHECK(cli::run({"augment", "--method", "affine", "--in", in, "--out", out}) == 0);
    CHECK(read_file(in) == read_file(out));
}

TEST_CASE("augment mix with forced alpha reproduces the first input") {
    const std::string dir = fresh_dir("augment_mix");
    const std::string config = write_config(dir);
    REQUIRE(cli::run({"gen-data", "--config", config, "--out", dir + "/data"}) == 0);
    const std::string a = dir + "/data/scene_000.rpc";
    const std::string b = dir + "/mixin.rpc";
    REQUIRE(cli::run({"augment", "--method", "noise", "--in", a, "--out", b, "--seed", "4",
                      "--sigma", "0.05"}) == 0);
    const std::string mixed = dir + "/mixed.rpc";
    CHECK(cli::run({"augment", "--method", "mix", "--in", a, "--in2", b, "--out", mixed,
                    "--alpha-const", "1"}) == 0);
    CHECK(read_file(a) == read_file(mixed));
}

TEST_CASE("augment reports unknown method through usage exit code") {
    const std::string dir = fresh_dir("augment_bad");
    CHECK(cli::run({"augment", "--method", "warp", "--in", "x", "--out", "y"}) == 2);
}

TEST_CASE("eval writes partition masks on request") {
    const std::string dir = fresh_dir("eval_dump");
    const std::string config = write_config(dir);
    REQUIRE(cli::run({"gen-data", "--config", config, "--out", dir + "/data"}) == 0);
    REQUIRE(cli::run({"train", "--config", config, "--manifest", dir + "/data/manifest.tsv",
                      "--out", dir + "/run"}) == 0);
    CHECK(cli::run({"eval", "--checkpoint", dir + "/run/model.ckpt", "--manifest",
                    dir + "/data/manifest.tsv", "--split", "test", "--dump-partitions",
                    dir + "/masks"}) == 0);
    int mask_files = 0;
    for (const auto& entry : fs::directory_iterator(dir + "/masks")) {
        ++mask_files;
        std::ifstream in(entry.path());
        long idx = 0;
        int reliable = 0;
        long cls = 0;
        int rows = 0;
        while (in >> idx >> reliable >> cls) {
            CHECK((reliable == 0 || reliable == 1));
            if (reliable == 0) CHECK(cls == -1);
            ++rows;
        }
        CHECK(rows == 96);
    }
    CHECK(mask_files == 1);
}
