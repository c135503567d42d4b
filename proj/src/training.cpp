#include "lczlab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>

#include "lczlab/error.hpp"
#include "lczlab/optim.hpp"

namespace lcz {

namespace {

constexpr std::size_t kEvalBatch = 64;
constexpr std::uint64_t kDropoutSalt = 0x9e3779b97f4a7c15ULL;

std::vector<PatchPair> normalized_batch(std::span<const PatchPair> split, std::span<const std::size_t> index,
                                        const Normalization& norm) {
    std::vector<PatchPair> out;
    out.reserve(index.size());
    for (std::size_t i : index) out.push_back(norm.apply(split[i]));
    return out;
}

std::vector<std::size_t> mapped_labels(std::span<const PatchPair> batch, const LabelMapping& mapping) {
    std::vector<std::size_t> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = mapping(batch[i].label);
    return labels;
}

// Restores the previous mode on scope exit.
class ModeGuard {
public:
    ModeGuard(FusionNetwork& net, Mode mode) : net_(net), saved_(net.mode()) { net_.set_mode(mode); }
    ~ModeGuard() { net_.set_mode(saved_); }
    ModeGuard(const ModeGuard&) = delete;
    ModeGuard& operator=(const ModeGuard&) = delete;

private:
    FusionNetwork& net_;
    Mode saved_;
};

struct SplitPass {
    double loss_sum = 0.0;  // summed per-sample cross entropy
    std::vector<std::size_t> truth;
    std::vector<std::size_t> predicted;
};

// Infer-mode pass over a whole split, no tape.
template <typename Visit>
void infer_batches(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                   const LabelMapping& mapping, Visit&& visit) {
    ModeGuard guard(net, Mode::infer);
    NoGradScope no_grad;
    std::vector<std::size_t> index;
    for (std::size_t start = 0; start < split.size(); start += kEvalBatch) {
        const std::size_t end = std::min(split.size(), start + kEvalBatch);
        index.resize(end - start);
        std::iota(index.begin(), index.end(), start);
        const auto batch = normalized_batch(split, index, norm);
        const auto labels = mapped_labels(batch, mapping);
        visit(net.forward_full(net.prepare(batch)), labels);
    }
}

SplitPass run_split(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                    const LabelMapping& mapping) {
    SplitPass pass;
    infer_batches(net, split, norm, mapping, [&](const ForwardResult& out, const std::vector<std::size_t>& labels) {
        const auto target = one_hot(labels, mapping.classes());
        pass.loss_sum += static_cast<double>(cross_entropy_loss(out.probs, target).item()) * labels.size();
        const auto pred = predict_classes(out.probs);
        pass.truth.insert(pass.truth.end(), labels.begin(), labels.end());
        pass.predicted.insert(pass.predicted.end(), pred.begin(), pred.end());
    });
    return pass;
}

bool all_finite(const Tensor& t) {
    for (Real v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

std::string format_optional(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os << std::setprecision(17) << *v;
    return os.str();
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ParameterError("learning rate must be positive and finite");
    if (batch_size == 0) throw ParameterError("batch size must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("dropout rate must lie in [0,1)");
    if (early_stop_patience && *early_stop_patience == 0) throw ParameterError("early-stop patience must be positive");
}

// ---------------------------------------------------------------------------
// log

void TrainLog::write_csv(std::ostream& os) const {
    os << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
    os << std::setprecision(17);
    for (const auto& e : epochs) {
        os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << format_optional(e.val_loss) << ','
           << format_optional(e.val_acc) << ',' << std::setprecision(6) << e.seconds << std::setprecision(17) << '\n';
    }
}

void TrainLog::write_csv(const std::filesystem::path& file) const {
    std::ofstream os(file);
    if (!os) throw IoError("cannot write " + file.string());
    write_csv(os);
    if (!os) throw IoError("failed writing " + file.string());
}

bool TrainLog::same_trajectory(const TrainLog& other) const {
    if (epochs.size() != other.epochs.size() || best_epoch != other.best_epoch) return false;
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = other.epochs[i];
        if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.train_acc != b.train_acc ||
            a.val_loss != b.val_loss || a.val_acc != b.val_acc)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// labels

LabelMapping::LabelMapping(LabelMode data_mode, LabelMode model_mode) {
    if (data_mode == LabelMode::merged8 && model_mode == LabelMode::original17)
        throw ConfigError("dataset holds merged 8-class labels; a 17-class model cannot be trained or evaluated on it");
    merge_ = data_mode == LabelMode::original17 && model_mode == LabelMode::merged8;
    classes_ = model_mode == LabelMode::merged8 ? kMergedClasses : kOriginalClasses;
}

std::size_t LabelMapping::operator()(std::size_t stored_label) const {
    if (merge_) return LabelSpace::merged().map(stored_label);
    if (stored_label >= classes_)
        throw DataError("label " + std::to_string(stored_label) + " outside the " + std::to_string(classes_) +
                        "-class space");
    return stored_label;
}

// ---------------------------------------------------------------------------
// training

Trainer::Trainer(FusionNetwork& net, const Dataset& data, const TrainConfig& config)
    : net_(net),
      data_(data),
      config_(config),
      mapping_(data.manifest.label_mode, net.spec().label_mode),
      shuffle_rng_(config.seed) {
    config_.validate();
    if (data.train.empty()) throw DataError("training split is empty");
    net_.set_dropout_rate(config_.dropout_rate);
    net_.reseed_dropout(config_.seed ^ kDropoutSalt);
    order_.resize(data.train.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
}

const EpochRecord& Trainer::run_epoch() {
    const auto start = std::chrono::steady_clock::now();
    const auto& norm = data_.manifest.normalization;
    const AdamConfig adam{.learning_rate = config_.learning_rate};
    const std::size_t epoch = log_.epochs.size() + 1;
    ModeGuard guard(net_, Mode::train);

    std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const std::size_t n = order_.size();
    for (std::size_t b = 0, start_i = 0; start_i < n; ++b, start_i += config_.batch_size) {
        const std::size_t end = std::min(n, start_i + config_.batch_size);
        const std::span<const std::size_t> index(order_.data() + start_i, end - start_i);
        const auto batch = normalized_batch(data_.train, index, norm);
        const auto labels = mapped_labels(batch, mapping_);
        const auto inputs = net_.prepare(batch);
        const Tensor target = one_hot(labels, mapping_.classes());

        Tape tape;
        Tensor loss;
        ForwardResult out;
        auto diverged = [&] {
            return DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1));
        };
        {
            TapeScope scope(tape);
            out = net_.forward_full(inputs);
            if (!all_finite(out.probs)) throw diverged();
            for (const auto& p : out.branch_probs)
                if (!all_finite(p)) throw diverged();
            loss = net_.loss(out, target);
        }
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) throw diverged();
        tape.backward(loss);
        adam_step(net_.parameters(), adam);

        loss_sum += value * static_cast<double>(labels.size());
        const auto pred = predict_classes(out.probs);
        for (std::size_t i = 0; i < labels.size(); ++i) correct += pred[i] == labels[i];
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    if (!data_.val.empty()) {
        const auto pass = run_split(net_, data_.val, norm, mapping_);
        const auto cm = ConfusionMatrix::from_labels(pass.truth, pass.predicted, mapping_.classes());
        rec.val_loss = pass.loss_sum / static_cast<double>(data_.val.size());
        rec.val_acc = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
        if (!best_val_acc_ || *rec.val_acc > *best_val_acc_) {
            best_val_acc_ = rec.val_acc;
            best_params_ = net_.parameters().snapshot();
            log_.best_epoch = epoch;
            since_best_ = 0;
        } else {
            ++since_best_;
        }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log_.epochs.push_back(rec);
    return log_.epochs.back();
}

bool Trainer::should_stop() const {
    if (log_.epochs.size() >= config_.epochs) return true;
    return config_.early_stop_patience && best_val_acc_ && since_best_ >= *config_.early_stop_patience;
}

TrainLog Trainer::finish() {
    if (!best_params_.empty()) net_.parameters().restore(best_params_);
    return log_;
}

TrainLog train(FusionNetwork& net, const Dataset& data, const TrainConfig& config) {
    Trainer trainer(net, data, config);
    while (!trainer.should_stop()) trainer.run_epoch();
    return trainer.finish();
}

// ---------------------------------------------------------------------------
// evaluation

SplitPredictions predict_split(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                               LabelMode data_mode) {
    const LabelMapping mapping(data_mode, net.spec().label_mode);
    SplitPredictions result;
    infer_batches(net, split, norm, mapping, [&](const ForwardResult& out, const std::vector<std::size_t>& labels) {
        const auto pred = predict_classes(out.probs);
        result.truth.insert(result.truth.end(), labels.begin(), labels.end());
        result.predicted.insert(result.predicted.end(), pred.begin(), pred.end());
    });
    return result;
}

ConfusionMatrix evaluate(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                         LabelMode data_mode) {
    const auto pred = predict_split(net, split, norm, data_mode);
    ConfusionMatrix cm(net.spec().num_classes, net.spec().label_space().class_names());
    for (std::size_t i = 0; i < pred.truth.size(); ++i) cm.add(pred.truth[i], pred.predicted[i]);
    return cm;
}

BranchOutputs branch_outputs(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                             LabelMode data_mode) {
    if (net.spec().variant != Variant::FM4) throw ConfigError("branch outputs need an FM4 network");
    const LabelMapping mapping(data_mode, net.spec().label_mode);
    BranchOutputs result;
    auto rows = [](const Tensor& probs, std::vector<std::vector<double>>& dst) {
        const std::size_t N = probs.shape()[0], K = probs.shape()[1];
        for (std::size_t i = 0; i < N; ++i) {
            std::vector<double> row(K);
            for (std::size_t k = 0; k < K; ++k) row[k] = static_cast<double>(probs[i * K + k]);
            dst.push_back(std::move(row));
        }
    };
    infer_batches(net, split, norm, mapping, [&](const ForwardResult& out, const std::vector<std::size_t>& labels) {
        rows(out.branch_probs.at(0), result.unet);
        rows(out.branch_probs.at(1), result.cnn);
        result.labels.insert(result.labels.end(), labels.begin(), labels.end());
    });
    return result;
}

// ---------------------------------------------------------------------------
// alpha tuning

std::vector<double> default_alpha_grid() {
    std::vector<double> grid(11);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / 10.0;
    return grid;
}

double tune_alpha(const BranchOutputs& outputs, std::span<const double> grid, const AlphaProbe& probe) {
    if (grid.empty()) throw ParameterError("alpha grid is empty");
    for (double a : grid)
        if (!(a >= 0.0 && a <= 1.0)) throw ParameterError("alpha grid value outside [0,1]: " + std::to_string(a));
    const std::size_t N = outputs.labels.size();
    if (N == 0) throw DataError("alpha tuning needs a non-empty validation split");
    if (outputs.unet.size() != N || outputs.cnn.size() != N) throw DataError("branch outputs and labels differ in length");

    double best_alpha = 0.0;
    std::optional<std::size_t> best_correct;
    for (double a : grid) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < N; ++i) {
            const auto& u = outputs.unet[i];
            const auto& c = outputs.cnn[i];
            if (u.size() != c.size() || u.empty()) throw DataError("ragged branch outputs");
            std::size_t arg = 0;
            double best = a * u[0] + (1.0 - a) * c[0];
            for (std::size_t k = 1; k < u.size(); ++k) {
                const double v = a * u[k] + (1.0 - a) * c[k];
                if (v > best) best = v, arg = k;
            }
            correct += arg == outputs.labels[i];
        }
        if (probe) probe(a, static_cast<double>(correct) / static_cast<double>(N));
        if (!best_correct || correct > *best_correct || (correct == *best_correct && a < best_alpha)) {
            best_correct = correct;
            best_alpha = a;
        }
    }
    return best_alpha;
}

double tune_alpha(FusionNetwork& net, std::span<const PatchPair> split, const Normalization& norm,
                  LabelMode data_mode, std::span<const double> grid, const AlphaProbe& probe) {
    const double alpha = tune_alpha(branch_outputs(net, split, norm, data_mode), grid, probe);
    net.set_alpha(alpha);
    return alpha;
}

}  // namespace lcz
