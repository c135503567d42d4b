#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lczlab/data.hpp"

namespace lcz {

/// K x K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t classes, std::vector<std::string> class_names = {});

    static ConfusionMatrix from_labels(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                       std::size_t classes);

    std::size_t classes() const noexcept { return k_; }
    const std::vector<std::string>& class_names() const noexcept { return names_; }
    void set_class_names(std::vector<std::string> names);

    void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
    std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t k) const;
    std::uint64_t col_sum(std::size_t k) const;

    /// Header row and column carry class names.
    void write_csv(std::ostream& os) const;

    bool operator==(const ConfusionMatrix& other) const = default;

private:
    std::size_t k_ = 0;
    std::vector<std::uint64_t> counts_;
    std::vector<std::string> names_;
};

/// One-vs-rest figures for a single class. Zero denominators give 0.
struct ClassMetrics {
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double kappa = 0;
    std::uint64_t support = 0;
};

ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t k);

/// trace / total. Throws UndefinedMetricError on an empty matrix.
double overall_accuracy(const ConfusionMatrix& cm);
/// Diagonal over the subset rows divided by their row totals. Throws
/// UndefinedMetricError when the subset has no support.
double subset_accuracy(const ConfusionMatrix& cm, std::span<const std::size_t> classes);
/// Cohen's kappa; 0 when expected agreement is 1.
double kappa(const ConfusionMatrix& cm);
/// Multiclass Matthews correlation; 0 on a zero denominator.
double mcc(const ConfusionMatrix& cm);

enum class AverageMode { macro, weighted };
/// Throws DataError on length mismatch.
double average(std::span<const double> values, std::span<const std::uint64_t> supports, AverageMode mode);

/// Sums 17x17 blocks by the label-space groups. Original space returns the
/// matrix unchanged. Throws DataError unless cm is 17 x 17.
ConfusionMatrix merge_confusion(const ConfusionMatrix& cm, const LabelSpace& space);

struct AveragedMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double kappa = 0;
};

struct MetricReport {
    std::vector<std::string> class_names;
    std::vector<ClassMetrics> per_class;
    std::uint64_t total = 0;
    double overall_accuracy = 0;
    std::optional<double> oa_built_up;
    std::optional<double> oa_natural;
    double kappa = 0;
    double mcc = 0;
    AveragedMetrics macro;
    AveragedMetrics weighted;

    std::string to_json(int indent = 2) const;
};

/// Full report. Subset accuracies come from `space` and are left empty when
/// the subset has no support.
MetricReport build_report(const ConfusionMatrix& cm, const LabelSpace& space);

}  // namespace lcz
