#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "experiment.hpp"
#include "lczlab/error.hpp"
#include "report.hpp"
#include "temp_dir.hpp"

using namespace lcz;
using namespace lcz::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "lczlab");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& file) { return json::parse(slurp(file)); }

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

// 4 classes x 7: 20 train, 4 val, 4 test patches.
fs::path small_dataset(const fs::path& root, std::uint64_t seed = 3) {
    const fs::path dir = root / "data";
    const auto r = run_cli({"generate", "--classes", "4", "--per-class", "7", "--seed", std::to_string(seed), "--out",
                            dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir;
}

// RAII override of LCZLAB_THREADS.
class ThreadsEnv {
public:
    explicit ThreadsEnv(const char* value) { ::setenv("LCZLAB_THREADS", value, 1); }
    ~ThreadsEnv() { ::unsetenv("LCZLAB_THREADS"); }
};

}  // namespace

// ---------------------------------------------------------------------------
// usage

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run_cli({"--help"}).code, 0); }

TEST(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run_cli({}).code, 2); }

TEST(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, 2); }

TEST(Cli, UnknownVariantIsUsageError) {
    testing_util::TempDir tmp;
    const auto r = run_cli({"train", "--variant", "fm9", "--out", (tmp.path() / "x").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("fm9"), std::string::npos);
    EXPECT_FALSE(fs::exists(tmp.path() / "x"));
}

// ---------------------------------------------------------------------------
// config

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(ExperimentConfig::from_values({{"train.epoch", 3}}), ConfigError);
    testing_util::TempDir tmp;
    std::ofstream(tmp.path() / "c.json") << R"({"train.epoch": 3})";
    const auto r = run_cli({"train", "--config", (tmp.path() / "c.json").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("train.epoch"), std::string::npos);
}

TEST(Config, WrongTypesRejected) {
    EXPECT_THROW(ExperimentConfig::from_values({{"train.epochs", "ten"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_values({{"train.epochs", -1}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_values({{"model.band_grouping", 1}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_values({{"train.learning_rate", 0.0}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_values({{"data.informative", "radar"}}), ConfigError);
}

TEST(Config, FileMustBeFlatJsonObject) {
    testing_util::TempDir tmp;
    std::ofstream(tmp.path() / "nested.json") << R"({"train": {"epochs": 3}})";
    std::ofstream(tmp.path() / "broken.json") << R"({"train.epochs": )";
    std::ofstream(tmp.path() / "array.json") << "[1, 2]";
    EXPECT_THROW(read_config_file(tmp.path() / "nested.json"), ConfigError);
    EXPECT_THROW(read_config_file(tmp.path() / "broken.json"), ConfigError);
    EXPECT_THROW(read_config_file(tmp.path() / "array.json"), ConfigError);
    EXPECT_THROW(read_config_file(tmp.path() / "missing.json"), ConfigError);
}

TEST(Config, ResolvesToOneSpecAndTrainConfig) {
    const auto cfg = ExperimentConfig::from_values({{"model.variant", "fm2"},
                                                    {"model.attention_heads", 4},
                                                    {"model.merge_labels", true},
                                                    {"train.epochs", 7},
                                                    {"train.batch_size", 16},
                                                    {"seed", 9}});
    const auto spec = cfg.model_spec();
    EXPECT_EQ(spec.variant, Variant::FM2);
    EXPECT_EQ(spec.attention_heads, 4u);
    EXPECT_EQ(spec.num_classes, 8u);
    EXPECT_EQ(cfg.train.epochs, 7u);
    EXPECT_EQ(cfg.train.batch_size, 16u);
    EXPECT_EQ(cfg.train.seed, 9u);
    EXPECT_EQ(cfg.synthetic.seed, 9u);
    // Fields for other variants are dropped when the spec is resolved for them.
    EXPECT_FALSE(cfg.model_spec(Variant::FM1).attention_heads.has_value());
    EXPECT_THROW(ExperimentConfig::from_values({{"model.attention_heads", 5}}).model_spec(Variant::FM2), ConfigError);
}

TEST(Config, DefaultsFollowTrainConfig) {
    const auto cfg = ExperimentConfig::from_values({});
    EXPECT_EQ(cfg.train.learning_rate, 1e-4);
    EXPECT_EQ(cfg.train.epochs, 100u);
    EXPECT_EQ(cfg.train.dropout_rate, 0.2);
    EXPECT_EQ(cfg.grid_width, 20u);
    EXPECT_EQ(cfg.grid_height, 20u);
    EXPECT_EQ(config_keys().size(), 22u);
}

TEST(Config, FlagsOverrideFile) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    std::ofstream(tmp.path() / "c.json") << R"({"train.epochs": 3, "model.variant": "FM1a", "data.path": ")"
                                        << data.string() << R"("})";
    const auto r = run_cli({"train", "--config", (tmp.path() / "c.json").string(), "--epochs", "1", "--out",
                            (tmp.path() / "run").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = read_json(tmp.path() / "run" / "summary.json");
    EXPECT_EQ(summary["epochs_run"], 1);
    EXPECT_EQ(summary["tag"], "FM1a");
}

// ---------------------------------------------------------------------------
// generate

TEST(Generate, DeterministicChecksums) {
    testing_util::TempDir tmp;
    for (const char* name : {"a", "b"})
        ASSERT_EQ(run_cli({"generate", "--classes", "3", "--per-class", "5", "--seed", "4", "--out",
                           (tmp.path() / name).string()})
                      .code,
                  0);
    EXPECT_EQ(slurp(tmp.path() / "a" / "manifest.json"), slurp(tmp.path() / "b" / "manifest.json"));
    const auto m = read_json(tmp.path() / "a" / "manifest.json");
    EXPECT_EQ(m["sha256"], read_json(tmp.path() / "b" / "manifest.json")["sha256"]);
}

TEST(Generate, SeventeenClassesByTwentyCounts) {
    testing_util::TempDir tmp;
    const auto r = run_cli({"generate", "--per-class", "20", "--out", tmp.path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = read_json(tmp.path() / "manifest.json");
    EXPECT_EQ(m["counts"]["train"], 238);
    EXPECT_EQ(m["counts"]["val"], 51);
    EXPECT_EQ(m["counts"]["test"], 51);
}

TEST(Generate, ZeroPerClassIsParameterError) {
    testing_util::TempDir tmp;
    const auto r = run_cli({"generate", "--per-class", "0", "--out", tmp.path().string()});
    EXPECT_EQ(r.code, 2);
}

TEST(Generate, UnwritablePathIsRuntimeFailure) {
    testing_util::TempDir tmp;
    std::ofstream(tmp.path() / "file") << "x";
    const auto r = run_cli({"generate", "--per-class", "2", "--out", (tmp.path() / "file" / "sub").string()});
    EXPECT_EQ(r.code, 1);
}

// ---------------------------------------------------------------------------
// train

TEST(TrainCmd, GroupedMergedRunUsesThatConfiguration) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    const auto r = run_cli({"train", "--variant", "fm1", "--merge-labels", "--band-grouping", "--epochs", "1", "--data",
                            data.string(), "--out", (tmp.path() / "run").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = read_json(tmp.path() / "run" / "summary.json");
    EXPECT_EQ(summary["tag"], "FM1_BL");
    EXPECT_EQ(summary["spec"]["band_grouping"], true);
    EXPECT_EQ(summary["spec"]["label_mode"], "merged8");
    EXPECT_EQ(summary["spec"]["num_classes"], 8);
    EXPECT_EQ(summary["validation"]["per_class"].size(), 8u);
    for (const char* f : {"train_log.csv", "wall_time.csv", "checkpoint/manifest.json", "checkpoint/params.bin"})
        EXPECT_TRUE(fs::exists(tmp.path() / "run" / f)) << f;
    EXPECT_EQ(read_checkpoint_spec(tmp.path() / "run" / "checkpoint").tag(), "FM1_BL");
}

TEST(TrainCmd, ZeroEpochsWritesUntrainedSummary) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    const auto r = run_cli({"train", "--variant", "fm1a", "--epochs", "0", "--data", data.string(), "--out",
                            (tmp.path() / "run").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto summary = read_json(tmp.path() / "run" / "summary.json");
    EXPECT_EQ(summary["epochs_run"], 0);
    EXPECT_TRUE(summary["best_epoch"].is_null());
    EXPECT_EQ(summary["validation"]["total"], 4);
    EXPECT_EQ(lines(slurp(tmp.path() / "run" / "train_log.csv")).size(), 1u);
}

TEST(TrainCmd, ReproducibleOutputs) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    for (const char* name : {"a", "b"})
        ASSERT_EQ(run_cli({"train", "--variant", "fm1a", "--epochs", "2", "--seed", "5", "--data", data.string(),
                           "--out", (tmp.path() / name).string()})
                      .code,
                  0);
    for (const char* f : {"train_log.csv", "summary.json", "checkpoint/manifest.json", "checkpoint/params.bin"})
        EXPECT_EQ(slurp(tmp.path() / "a" / f), slurp(tmp.path() / "b" / f)) << f;
    EXPECT_EQ(lines(slurp(tmp.path() / "a" / "train_log.csv"))[0], "epoch,train_loss,train_acc,val_loss,val_acc");
    EXPECT_EQ(lines(slurp(tmp.path() / "a" / "wall_time.csv")).size(), 3u);
}

TEST(TrainCmd, GeneratesSyntheticDataWithoutDataPath) {
    testing_util::TempDir tmp;
    const auto r = run_cli({"train", "--variant", "fm1a", "--epochs", "1", "--classes", "2", "--per-class", "7",
                            "--out", tmp.path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(tmp.path() / "dataset" / "manifest.json"));
    EXPECT_EQ(read_json(tmp.path() / "summary.json")["dataset_sha256"],
              dataset_fingerprint(read_manifest(tmp.path() / "dataset")));
}

TEST(TrainCmd, Fm4TunesAlphaUnlessGiven) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    auto r = run_cli({"train", "--variant", "fm4", "--epochs", "1", "--data", data.string(), "--out",
                      (tmp.path() / "tuned").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto summary = read_json(tmp.path() / "tuned" / "summary.json");
    EXPECT_EQ(summary["alpha_tuned"], true);
    const double tuned = summary["alpha"];
    EXPECT_GE(tuned, 0.0);
    EXPECT_LE(tuned, 1.0);
    EXPECT_EQ(read_checkpoint_spec(tmp.path() / "tuned" / "checkpoint").alpha, tuned);

    r = run_cli({"train", "--variant", "fm4", "--alpha", "0.3", "--epochs", "1", "--data", data.string(), "--out",
                 (tmp.path() / "fixed").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    summary = read_json(tmp.path() / "fixed" / "summary.json");
    EXPECT_EQ(summary["alpha_tuned"], false);
    EXPECT_EQ(summary["alpha"], 0.3);
}

TEST(TrainCmd, InapplicableOptionsRejected) {
    testing_util::TempDir tmp;
    EXPECT_EQ(run_cli({"train", "--variant", "fm1", "--alpha", "0.5", "--out", tmp.path().string()}).code, 2);
    EXPECT_EQ(run_cli({"train", "--variant", "fm4", "--alpha", "1.5", "--out", tmp.path().string()}).code, 2);
}

TEST(TrainCmd, MergedDatasetWithFullModelIsConfigError) {
    testing_util::TempDir tmp;
    SyntheticConfig sc;
    sc.classes = 4;
    sc.per_class = 7;
    auto data = generate_synthetic(sc);
    data.manifest.label_mode = LabelMode::merged8;
    store_dataset(tmp.path() / "merged", data);
    const auto r = run_cli({"train", "--variant", "fm1a", "--epochs", "1", "--data", (tmp.path() / "merged").string(),
                            "--out", (tmp.path() / "run").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(run_cli({"train", "--variant", "fm1a", "--merge-labels", "--epochs", "1", "--data",
                       (tmp.path() / "merged").string(), "--out", (tmp.path() / "run").string()})
                  .code,
              0);
}

TEST(TrainCmd, MissingDatasetIsRuntimeFailure) {
    testing_util::TempDir tmp;
    const auto r = run_cli({"train", "--variant", "fm1a", "--data", (tmp.path() / "none").string(), "--out",
                            (tmp.path() / "run").string()});
    EXPECT_EQ(r.code, 1);
}

// ---------------------------------------------------------------------------
// ablate

TEST(Ablate, ThreeVariantsShareDatasetChecksum) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    ThreadsEnv threads("2");
    const auto r = run_cli({"ablate", "--variants", "FM1,FM1a,FM1b", "--epochs", "1", "--data", data.string(), "--out",
                            (tmp.path() / "abl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = lines(slurp(tmp.path() / "abl" / "ablation.csv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], "variant,oa,oa_built_up,oa_natural,kappa,mcc,dataset_sha256,status");
    const std::string fingerprint = dataset_fingerprint(read_manifest(data));
    std::set<std::string> names;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_NE(rows[i].find("," + fingerprint + ",ok"), std::string::npos) << rows[i];
        names.insert(rows[i].substr(0, rows[i].find(',')));
    }
    EXPECT_EQ(names, (std::set<std::string>{"FM1", "FM1a", "FM1b"}));
    for (const auto& n : names) EXPECT_TRUE(fs::exists(tmp.path() / "abl" / n / "summary.json")) << n;
    EXPECT_NE(r.out.find("OA_bu"), std::string::npos);
}

TEST(Ablate, SingleVariantOneRow) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    const auto r = run_cli({"ablate", "--variants", "fm1a", "--band-grouping", "--epochs", "1", "--data", data.string(),
                            "--out", tmp.path().string() + "/abl"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = lines(slurp(tmp.path() / "abl" / "ablation.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].substr(0, rows[1].find(',')), "FM1a_B");
}

TEST(Ablate, ParallelAndSerialRunsAgree) {
    testing_util::TempDir tmp;
    const auto data = small_dataset(tmp.path());
    {
        ThreadsEnv threads("1");
        ASSERT_EQ(run_cli({"ablate", "--variants", "fm1a,fm1b", "--epochs", "1", "--data", data.string(), "--out",
                           (tmp.path() / "serial").string()})
                      .code,
                  0);
    }
    {
        ThreadsEnv threads("2");
        ASSERT_EQ(run_cli({"ablate", "--variants", "fm1a,fm1b", "--epochs", "1", "--data", data.string(), "--out",
                           (tmp.path() / "parallel").string()})
                      .code,
                  0);
    }
    EXPECT_EQ(slurp(tmp.path() / "serial" / "ablation.csv"), slurp(tmp.path() / "parallel" / "ablation.csv"));
}

TEST(Ablate, ConfigErrors) {
    testing_util::TempDir tmp;
    EXPECT_EQ(run_cli({"ablate", "--out", tmp.path().string()}).code, 2);
    EXPECT_EQ(run_cli({"ablate", "--variants", "fm1,FM1", "--out", tmp.path().string()}).code, 2);
    EXPECT_EQ(run_cli({"ablate", "--variants", "fm1,fmx", "--out", tmp.path().string()}).code, 2);
    ThreadsEnv threads("0");
    EXPECT_EQ(run_cli({"ablate", "--variants", "fm1", "--out", tmp.path().string()}).code, 2);
}

TEST(Ablate, SortContract) {
    auto row = [](std::string name, double oa, bool failed = false) {
        AblationRow r;
        r.variant = std::move(name);
        r.oa = oa;
        if (failed) r.error = "diverged";
        return r;
    };
    std::vector<AblationRow> rows{row("FM2", 0.5), row("FM1b", 0.7), row("FM1", 0.7), row("FM0", 0.9, true),
                                  row("FM1a", 0.2), row("FM3", 0.9)};
    sort_ablation_rows(rows);
    std::vector<std::string> order;
    for (const auto& r : rows) order.push_back(r.variant);
    EXPECT_EQ(order, (std::vector<std::string>{"FM3", "FM1", "FM1b", "FM2", "FM1a", "FM0"}));

    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    const auto out = lines(csv.str());
    EXPECT_EQ(out.back(), "FM0,,,,,,,\"error: diverged\"");
}

// ---------------------------------------------------------------------------
// report

TEST(Grid, TruncatesWithSentinel) {
    const std::vector<std::size_t> labels{3, 0, 16};
    const auto g = GridReport::from_labels(labels, 2, 2);
    EXPECT_EQ(g.cells, (std::vector<std::uint8_t>{3, 0, 16, kGridSentinel}));
    std::ostringstream csv, pgm;
    g.write_csv(csv);
    EXPECT_EQ(csv.str(), "3,0\n16,255\n");
    g.write_pgm(pgm);
    const std::string pixels{'\x03', '\x00', '\x10', '\xff'};
    EXPECT_EQ(pgm.str(), "P5\n2 2\n255\n" + pixels);
    EXPECT_THROW(GridReport::from_labels(labels, 0, 2), ConfigError);
}

TEST(Grid, DefaultIsTwentyByTwentyOverFirstPatches) {
    std::vector<std::size_t> labels(500);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 17;
    const auto g = GridReport::from_labels(labels, 20, 20);
    ASSERT_EQ(g.cells.size(), 400u);
    for (std::size_t i = 0; i < 400; ++i) EXPECT_EQ(g.cells[i], i % 17);
}

class ReportCmd : public ::testing::Test {
protected:
    void SetUp() override {
        data_ = small_dataset(tmp_.path());
        const auto r = run_cli({"train", "--variant", "fm1a", "--merge-labels", "--epochs", "1", "--data",
                                data_.string(), "--out", (tmp_.path() / "run").string()});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    testing_util::TempDir tmp_;
    fs::path data_;
};

TEST_F(ReportCmd, WritesMetricsConfusionAndGrid) {
    std::map<fs::path, std::string> before;
    for (const auto& e : fs::directory_iterator(data_)) before[e.path()] = slurp(e.path());
    const fs::path out = tmp_.path() / "report";
    const auto r = run_cli({"report", "--checkpoint", (tmp_.path() / "run" / "checkpoint").string(), "--data",
                            data_.string(), "--out", out.string()});
    ASSERT_EQ(r.code, 0) << r.err;

    const auto metrics = read_json(out / "metrics.json");
    EXPECT_EQ(metrics["total"], 4);

    const auto cm = lines(slurp(out / "confusion.csv"));
    ASSERT_EQ(cm.size(), 9u);
    std::string header = "true\\pred";
    for (const auto& n : merged_class_names()) header += "," + n;
    EXPECT_EQ(cm[0], header);

    const auto grid = lines(slurp(out / "grid_truth.csv"));
    ASSERT_EQ(grid.size(), 20u);
    EXPECT_EQ(std::count(grid[0].begin(), grid[0].end(), ','), 19);
    EXPECT_EQ(grid[0].substr(grid[0].size() - 4), ",255");
    EXPECT_EQ(grid[19], grid[1]);
    const std::string pgm = slurp(out / "grid_pred.pgm");
    const std::string head = "P5\n20 20\n255\n";
    ASSERT_EQ(pgm.size(), head.size() + 400);
    EXPECT_EQ(pgm.substr(0, head.size()), head);
    for (std::size_t i = 4; i < 400; ++i) EXPECT_EQ(static_cast<unsigned char>(pgm[head.size() + i]), 255u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(static_cast<unsigned char>(pgm[head.size() + i]), 8u);

    std::map<fs::path, std::string> after;
    for (const auto& e : fs::directory_iterator(data_)) after[e.path()] = slurp(e.path());
    EXPECT_EQ(before, after);
}

TEST_F(ReportCmd, Reproducible) {
    for (const char* name : {"a", "b"})
        ASSERT_EQ(run_cli({"report", "--checkpoint", (tmp_.path() / "run" / "checkpoint").string(), "--data",
                           data_.string(), "--out", (tmp_.path() / name).string(), "--grid-width", "3", "--grid-height",
                           "2"})
                      .code,
                  0);
    for (const char* f : {"metrics.json", "confusion.csv", "grid_truth.csv", "grid_pred.csv", "grid_truth.pgm"})
        EXPECT_EQ(slurp(tmp_.path() / "a" / f), slurp(tmp_.path() / "b" / f)) << f;
    EXPECT_EQ(lines(slurp(tmp_.path() / "a" / "grid_truth.csv")).size(), 2u);
}

TEST_F(ReportCmd, RefusesToWriteIntoDataset) {
    const auto r = run_cli({"report", "--checkpoint", (tmp_.path() / "run" / "checkpoint").string(), "--data",
                            data_.string(), "--out", (data_ / "report").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(fs::exists(data_ / "report"));
}

TEST_F(ReportCmd, ClassCountMismatchIsConfigError) {
    SyntheticConfig sc;
    sc.classes = 4;
    sc.per_class = 7;
    auto merged = generate_synthetic(sc);
    merged.manifest.label_mode = LabelMode::merged8;
    store_dataset(tmp_.path() / "merged", merged);
    ASSERT_EQ(run_cli({"train", "--variant", "fm1a", "--epochs", "0", "--data", data_.string(), "--out",
                       (tmp_.path() / "full").string()})
                  .code,
              0);
    const auto r = run_cli({"report", "--checkpoint", (tmp_.path() / "full" / "checkpoint").string(), "--data",
                            (tmp_.path() / "merged").string(), "--out", (tmp_.path() / "rep").string()});
    EXPECT_EQ(r.code, 2);
}

TEST_F(ReportCmd, RequiresCheckpointAndData) {
    EXPECT_EQ(run_cli({"report", "--data", data_.string(), "--out", (tmp_.path() / "r").string()}).code, 2);
    EXPECT_EQ(run_cli({"report", "--checkpoint", (tmp_.path() / "run" / "checkpoint").string(), "--out",
                       (tmp_.path() / "r").string()})
                  .code,
              2);
}
