#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "lczlab/dataset.hpp"
#include "lczlab/metrics.hpp"
#include "lczlab/model.hpp"

namespace lcz {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t epochs = 100;
    double dropout_rate = 0.2;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    /// Stop after this many epochs without a validation OA improvement.
    std::optional<std::size_t> early_stop_patience;

    /// Throws ParameterError on a non-positive rate or batch size.
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    std::optional<double> val_loss;  // empty without a validation split
    std::optional<double> val_acc;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    /// Epoch whose parameters were kept (best validation OA, earliest on ties).
    std::optional<std::size_t> best_epoch;

    /// epoch,train_loss,train_acc,val_loss,val_acc,seconds
    void write_csv(std::ostream& os) const;
    void write_csv(const std::filesystem::path& file) const;
    /// Equal in everything except wall time.
    bool same_trajectory(const TrainLog& other) const;
};

/// Maps labels stored under `data_mode` into the model's label space. Throws
/// ConfigError when the model needs finer labels than the dataset holds.
class LabelMapping {
public:
    LabelMapping(LabelMode data_mode, LabelMode model_mode);
    std::size_t operator()(std::size_t stored_label) const;
    std::size_t classes() const noexcept { return classes_; }

private:
    bool merge_ = false;
    std::size_t classes_ = 0;
};

/// Mini-batch Adam training one epoch at a time. Patches are normalized with
/// the manifest statistics as they are batched.
class Trainer {
public:
    /// Throws DataError on an empty training split, ParameterError or
    /// ConfigError on an invalid config or label-space mismatch.
    Trainer(FusionNetwork& net, const Dataset& data, const TrainConfig& config);

    /// Runs one epoch and returns its log entry. Throws DivergenceError on a
    /// non-finite loss.
    const EpochRecord& run_epoch();
    bool should_stop() const;
    /// Restores the best-validation parameters and returns the log.
    TrainLog finish();

    const TrainLog& log() const noexcept { return log_; }

private:
    FusionNetwork& net_;
    const Dataset& data_;
    TrainConfig config_;
    LabelMapping mapping_;
    std::vector<std::size_t> order_;
    Rng shuffle_rng_;
    TrainLog log_;
    std::optional<double> best_val_acc_;
    std::vector<Real> best_params_;
    std::size_t since_best_ = 0;
};

/// Runs `config.epochs` epochs (fewer with early stopping) and keeps the
/// best-validation parameters. epochs=0 leaves the network untouched.
TrainLog train(FusionNetwork& net, const Dataset& data, const TrainConfig& config);

struct SplitPredictions {
    std::vector<std::size_t> truth;  // mapped into the model's label space
    std::vector<std::size_t> predicted;
};

/// Infer-mode predictions for every patch of `split`, in split order.
SplitPredictions predict_split(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                               LabelMode data_mode);

/// Infer-mode confusion matrix over `split` (raw patches, normalized here)
/// in the model's label space. Parameters and running statistics are left
/// unchanged.
ConfusionMatrix evaluate(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                         LabelMode data_mode);

/// Per-branch probabilities of an FM4 network over a split, plus mapped labels.
struct BranchOutputs {
    std::vector<std::vector<double>> unet;  // [N][K]
    std::vector<std::vector<double>> cnn;
    std::vector<std::size_t> labels;
};

BranchOutputs branch_outputs(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                             LabelMode data_mode);

/// 0.0, 0.1, ..., 1.0
std::vector<double> default_alpha_grid();

/// Called once per evaluated grid value with its validation OA.
using AlphaProbe = std::function<void(double alpha, double overall_accuracy)>;

/// Grid value maximizing OA of alpha*unet + (1-alpha)*cnn; ties go to the
/// smaller alpha. Throws ParameterError on an empty grid or a value outside
/// [0,1], DataError on empty or ragged outputs.
double tune_alpha(const BranchOutputs& outputs, std::span<const double> grid, const AlphaProbe& probe = {});

/// Tunes an FM4 network on `split` and sets the chosen alpha on it.
double tune_alpha(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                  LabelMode data_mode, std::span<const double> grid, const AlphaProbe& probe = {});

}  // namespace lcz
