#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "experiment.hpp"
#include "lczlab/error.hpp"
#include "report.hpp"

namespace lcz::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Raw command-line values; only flags that were given override the file.
struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> variant;
    bool band_grouping = false;
    bool merge_labels = false;
    std::optional<double> alpha;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::size_t> patience;
    std::optional<std::string> data;
    std::optional<std::size_t> classes;
    std::optional<std::size_t> per_class;
    std::optional<double> noise;
    std::optional<std::string> informative;
    std::optional<std::string> variants;
    std::optional<std::string> checkpoint;
    std::optional<std::size_t> grid_width;
    std::optional<std::size_t> grid_height;
};

ExperimentConfig resolve_config(const Flags& f) {
    ConfigValues values;
    if (!f.config.empty()) values = read_config_file(f.config);
    auto set = [&](const char* key, const auto& opt) {
        if (opt) values[key] = *opt;
    };
    set("seed", f.seed);
    set("out", f.out);
    set("model.variant", f.variant);
    if (f.band_grouping) values["model.band_grouping"] = true;
    if (f.merge_labels) values["model.merge_labels"] = true;
    set("model.alpha", f.alpha);
    set("train.epochs", f.epochs);
    set("train.batch_size", f.batch_size);
    set("train.learning_rate", f.learning_rate);
    set("train.early_stop_patience", f.patience);
    set("data.path", f.data);
    set("data.classes", f.classes);
    set("data.per_class", f.per_class);
    set("data.noise", f.noise);
    set("data.informative", f.informative);
    set("ablate.variants", f.variants);
    set("report.checkpoint", f.checkpoint);
    set("report.grid_width", f.grid_width);
    set("report.grid_height", f.grid_height);
    return ExperimentConfig::from_values(values);
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

ojson report_json(const ConfusionMatrix& cm, const LabelSpace& space) {
    return ojson::parse(build_report(cm, space).to_json());
}

struct RunOutcome {
    std::optional<ConfusionMatrix> validation;
    std::optional<ConfusionMatrix> test;
};

// Trains one spec on `data` and writes checkpoint/, train_log.csv,
// wall_time.csv and summary.json into `dir`.
RunOutcome run_training(const ModelSpec& spec, const Dataset& data, const ExperimentConfig& config,
                        const fs::path& dir, std::ostream* progress) {
    make_dir(dir);
    auto net = FusionNetwork::build(spec, config.seed);
    Trainer trainer(*net, data, config.train);
    while (!trainer.should_stop()) {
        const auto& e = trainer.run_epoch();
        if (progress) {
            *progress << spec.tag() << " epoch " << e.epoch << '/' << config.train.epochs << std::fixed
                      << std::setprecision(4) << " loss " << e.train_loss << " acc " << e.train_acc;
            if (e.val_acc) *progress << " val_loss " << *e.val_loss << " val_acc " << *e.val_acc;
            *progress << std::defaultfloat << '\n';
        }
    }
    const TrainLog log = trainer.finish();

    const auto& norm = data.manifest.normalization;
    const LabelMode data_mode = data.manifest.label_mode;
    bool tuned = false;
    if (spec.variant == Variant::FM4 && !config.alpha && !data.val.empty()) {
        tune_alpha(*net, data.val, norm, data_mode, default_alpha_grid());
        tuned = true;
    }

    RunOutcome outcome;
    if (!data.val.empty()) outcome.validation = evaluate(*net, data.val, norm, data_mode);
    if (!data.test.empty()) outcome.test = evaluate(*net, data.test, norm, data_mode);

    save_checkpoint(*net, dir / "checkpoint");

    // Wall time lives apart so train_log.csv is reproducible byte for byte.
    std::ostringstream log_csv, wall_csv;
    log_csv << std::setprecision(17) << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    wall_csv << "epoch,seconds\n";
    for (const auto& e : log.epochs) {
        log_csv << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',';
        if (e.val_loss) log_csv << *e.val_loss;
        log_csv << ',';
        if (e.val_acc) log_csv << *e.val_acc;
        log_csv << '\n';
        wall_csv << e.epoch << ',' << e.seconds << '\n';
    }
    write_text_file(dir / "train_log.csv", log_csv.str());
    write_text_file(dir / "wall_time.csv", wall_csv.str());

    const LabelSpace space = spec.label_space();
    ojson summary;
    summary["tag"] = spec.tag();
    summary["spec"] = ojson::parse(spec_to_json(net->spec()));
    summary["seed"] = config.seed;
    summary["dataset_sha256"] = dataset_fingerprint(data.manifest);
    summary["train"] = {{"learning_rate", config.train.learning_rate},
                        {"epochs", config.train.epochs},
                        {"batch_size", config.train.batch_size},
                        {"dropout_rate", config.train.dropout_rate}};
    summary["train"]["early_stop_patience"] =
        config.train.early_stop_patience ? ojson(*config.train.early_stop_patience) : ojson(nullptr);
    summary["epochs_run"] = log.epochs.size();
    summary["best_epoch"] = log.best_epoch ? ojson(*log.best_epoch) : ojson(nullptr);
    if (spec.variant == Variant::FM4) {
        summary["alpha"] = *net->spec().alpha;
        summary["alpha_tuned"] = tuned;
    }
    summary["validation"] = outcome.validation ? report_json(*outcome.validation, space) : ojson(nullptr);
    summary["test"] = outcome.test ? report_json(*outcome.test, space) : ojson(nullptr);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    return outcome;
}

// ---------------------------------------------------------------------------
// commands

int cmd_generate(const ExperimentConfig& config, std::ostream& out) {
    const auto manifest = store_dataset(config.out, generate_synthetic(config.synthetic));
    out << "wrote " << config.out.string() << ": train " << manifest.counts.train << ", val " << manifest.counts.val
        << ", test " << manifest.counts.test << '\n'
        << "dataset sha256 " << dataset_fingerprint(manifest) << '\n';
    return kExitOk;
}

int cmd_train(const ExperimentConfig& config, std::ostream& out) {
    const Variant v = config.variant;
    if (config.alpha && v != Variant::FM4) throw ConfigError("alpha applies to FM4 only");
    if (config.attention_heads && !is_attention_variant(v))
        throw ConfigError("attention heads apply to FM2 and FM2b only");
    if (config.scale_sizes && !is_scale_space_variant(v)) throw ConfigError("scale sizes apply to FM3 variants only");
    const ModelSpec spec = config.model_spec();
    make_dir(config.out);
    const Dataset data = resolve_dataset(config);
    // Fail on a label-space mismatch before any work.
    LabelMapping(data.manifest.label_mode, spec.label_mode);
    const auto outcome = run_training(spec, data, config, config.out, &out);
    out << spec.tag() << ": ";
    if (outcome.validation && outcome.validation->total() > 0)
        out << "validation OA " << std::fixed << std::setprecision(4) << overall_accuracy(*outcome.validation)
            << std::defaultfloat;
    else
        out << "no validation split";
    out << "\nwrote " << (config.out / "summary.json").string() << '\n';
    return kExitOk;
}

std::size_t ablation_threads(std::size_t jobs) {
    std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LCZLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw ConfigError(std::string("LCZLAB_THREADS must be a positive integer, got '") + env + "'");
        cap = static_cast<std::size_t>(v);
    }
    return std::min(cap, jobs);
}

int cmd_ablate(const ExperimentConfig& config, std::ostream& out) {
    if (config.ablate_variants.empty()) throw ConfigError("ablate needs at least one variant (--variants)");
    std::vector<ModelSpec> specs;
    std::set<std::string> tags;
    for (Variant v : config.ablate_variants) {
        specs.push_back(config.model_spec(v));
        if (!tags.insert(specs.back().tag()).second) throw ConfigError("variant listed twice: " + specs.back().tag());
    }
    make_dir(config.out);
    const Dataset data = resolve_dataset(config);
    LabelMapping(data.manifest.label_mode, specs.front().label_mode);
    const std::string fingerprint = dataset_fingerprint(data.manifest);
    const LabelSpace space = specs.front().label_space();

    std::vector<AblationRow> rows(specs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            AblationRow& row = rows[i];
            row.variant = specs[i].tag();
            row.dataset_sha256 = fingerprint;
            try {
                const auto outcome = run_training(specs[i], data, config, config.out / row.variant, nullptr);
                if (!outcome.test) throw DataError("test split is empty");
                const auto report = build_report(*outcome.test, space);
                row.oa = report.overall_accuracy;
                row.oa_built_up = report.oa_built_up;
                row.oa_natural = report.oa_natural;
                row.kappa = report.kappa;
                row.mcc = report.mcc;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    const std::size_t threads = ablation_threads(specs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    sort_ablation_rows(rows);
    std::ostringstream csv;
    write_ablation_csv(csv, rows);
    write_text_file(config.out / "ablation.csv", csv.str());
    print_ablation_table(out, rows);
    const bool failed = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.error.has_value(); });
    return failed ? kExitFailure : kExitOk;
}

bool inside(const fs::path& child, const fs::path& parent) {
    const auto c = fs::weakly_canonical(fs::absolute(child));
    const auto p = fs::weakly_canonical(fs::absolute(parent));
    auto ci = c.begin();
    for (auto pi = p.begin(); pi != p.end(); ++pi, ++ci) {
        if (pi->empty()) continue;  // trailing separator
        if (ci == c.end() || *ci != *pi) return false;
    }
    return true;
}

int cmd_report(const ExperimentConfig& config, std::ostream& out) {
    if (!config.checkpoint) throw ConfigError("report needs --checkpoint");
    if (!config.data_path) throw ConfigError("report needs --data");
    if (inside(config.out, *config.data_path)) throw ConfigError("report output must not go into the dataset directory");
    const ModelSpec spec = read_checkpoint_spec(*config.checkpoint);
    const DatasetManifest manifest = read_manifest(*config.data_path);
    LabelMapping(manifest.label_mode, spec.label_mode);
    auto net = load_checkpoint(*config.checkpoint);
    const Dataset data = load_dataset(*config.data_path);
    const auto pred = predict_split(*net, data.test, data.manifest.normalization, data.manifest.label_mode);
    ConfusionMatrix cm(spec.num_classes, spec.label_space().class_names());
    for (std::size_t i = 0; i < pred.truth.size(); ++i) cm.add(pred.truth[i], pred.predicted[i]);
    const auto report = build_report(cm, spec.label_space());

    make_dir(config.out);
    write_text_file(config.out / "metrics.json", report.to_json() + "\n");
    std::ostringstream cm_csv;
    cm.write_csv(cm_csv);
    write_text_file(config.out / "confusion.csv", cm_csv.str());
    const auto truth = GridReport::from_labels(pred.truth, config.grid_width, config.grid_height);
    const auto predicted = GridReport::from_labels(pred.predicted, config.grid_width, config.grid_height);
    for (const auto& [name, grid] : {std::pair{"truth", &truth}, std::pair{"pred", &predicted}}) {
        std::ostringstream csv, pgm;
        grid->write_csv(csv);
        grid->write_pgm(pgm);
        write_text_file(config.out / (std::string("grid_") + name + ".csv"), csv.str());
        write_text_file(config.out / (std::string("grid_") + name + ".pgm"), pgm.str());
    }
    out << spec.tag() << " on " << cm.total() << " test patches: OA " << std::fixed << std::setprecision(4)
        << report.overall_accuracy << ", kappa " << report.kappa << std::defaultfloat << '\n'
        << "wrote " << config.out.string() << '\n';
    return kExitOk;
}

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON file of flat dotted keys; flags override it");
    cmd->add_option("--seed", f.seed, "seed for initialization, shuffling and synthetic data");
    cmd->add_option("--out", f.out, "output directory");
}

void add_synthetic(CLI::App* cmd, Flags& f) {
    cmd->add_option("--classes", f.classes, "synthetic class count (1-17)");
    cmd->add_option("--per-class", f.per_class, "synthetic patches per class");
    cmd->add_option("--noise", f.noise, "synthetic noise standard deviation");
    cmd->add_option("--informative", f.informative, "which modality carries the class: both | sar | msi");
}

void add_model(CLI::App* cmd, Flags& f) {
    cmd->add_flag("--band-grouping", f.band_grouping, "spectral band grouping");
    cmd->add_flag("--merge-labels", f.merge_labels, "train on the 8 merged classes");
    cmd->add_option("--alpha", f.alpha, "FM4 fusion weight (tuned on validation when absent)");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--batch-size", f.batch_size, "mini-batch size");
    cmd->add_option("--lr", f.learning_rate, "Adam learning rate");
    cmd->add_option("--patience", f.patience, "early-stop patience in epochs");
    cmd->add_option("--data", f.data, "dataset directory (synthetic data is generated when absent)");
    add_synthetic(cmd, f);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hybrid SAR/MSI fusion networks for local climate zone classification"};
    app.name("lczlab");
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("generate", "write a deterministic synthetic dataset");
    add_common(gen, f);
    add_synthetic(gen, f);

    auto* trn = app.add_subcommand("train", "train one network and write checkpoint, logs and summary");
    add_common(trn, f);
    trn->add_option("--variant", f.variant, "FM1, FM1a, FM1b, FM2, FM2b, FM3, FM3a, FM3b or FM4");
    add_model(trn, f);

    auto* abl = app.add_subcommand("ablate", "train several variants on identical data and tabulate test metrics");
    add_common(abl, f);
    abl->add_option("--variants", f.variants, "comma-separated variant names");
    add_model(abl, f);

    auto* rep = app.add_subcommand("report", "evaluate a checkpoint on a test split: metrics, confusion matrix, grid map");
    add_common(rep, f);
    rep->add_option("--checkpoint", f.checkpoint, "checkpoint directory");
    rep->add_option("--data", f.data, "dataset directory");
    rep->add_option("--grid-width", f.grid_width, "grid columns");
    rep->add_option("--grid-height", f.grid_height, "grid rows");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const ExperimentConfig config = resolve_config(f);
        if (gen->parsed()) return cmd_generate(config, out);
        if (trn->parsed()) return cmd_train(config, out);
        if (abl->parsed()) return cmd_ablate(config, out);
        return cmd_report(config, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace lcz::cli
