#include "lczlab/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "lczlab/error.hpp"

namespace lcz {

using i128 = __int128;

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::string> class_names)
    : k_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw DataError("confusion matrix needs at least one class");
    set_class_names(std::move(class_names));
}

void ConfusionMatrix::set_class_names(std::vector<std::string> names) {
    if (names.empty()) {
        names.resize(k_);
        for (std::size_t i = 0; i < k_; ++i) names[i] = std::to_string(i);
    }
    if (names.size() != k_) {
        throw DataError("confusion matrix has " + std::to_string(k_) + " classes but " + std::to_string(names.size()) + " names");
    }
    names_ = std::move(names);
}

ConfusionMatrix ConfusionMatrix::from_labels(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                             std::size_t classes) {
    if (truth.size() != predicted.size()) {
        throw DataError("label and prediction counts differ: " + std::to_string(truth.size()) + " vs " +
                        std::to_string(predicted.size()));
    }
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
    if (truth >= k_ || predicted >= k_) {
        throw DataError("class pair (" + std::to_string(truth) + "," + std::to_string(predicted) + ") outside " +
                        std::to_string(k_) + " classes");
    }
    counts_[truth * k_ + predicted] += count;
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < k_; ++k) s += at(k, k);
    return s;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t k) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < k_; ++j) s += at(k, j);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t k) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, k);
    return s;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void require_nonempty(const ConfusionMatrix& cm, const char* metric) {
    if (cm.classes() == 0 || cm.total() == 0) throw UndefinedMetricError(std::string(metric) + " of an empty confusion matrix");
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

void ConfusionMatrix::write_csv(std::ostream& os) const {
    os << "true\\pred";
    for (const auto& n : names_) os << ',' << csv_field(n);
    os << '\n';
    for (std::size_t i = 0; i < k_; ++i) {
        os << csv_field(names_[i]);
        for (std::size_t j = 0; j < k_; ++j) os << ',' << at(i, j);
        os << '\n';
    }
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t k) {
    if (k >= cm.classes()) throw DataError("class " + std::to_string(k) + " outside " + std::to_string(cm.classes()) + " classes");
    const std::uint64_t n = cm.total(), tp = cm.at(k, k);
    const std::uint64_t fn = cm.row_sum(k) - tp, fp = cm.col_sum(k) - tp, tn = n - tp - fn - fp;
    ClassMetrics m;
    m.support = tp + fn;
    m.accuracy = safe_ratio(static_cast<double>(tp + tn), static_cast<double>(n));
    m.precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
    m.recall = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    m.f1 = safe_ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    // binary kappa of the one-vs-rest 2x2 table, in integers until the final division
    const i128 expected = i128(tp + fn) * (tp + fp) + i128(fp + tn) * (fn + tn);
    const i128 num = i128(n) * (tp + tn) - expected, den = i128(n) * n - expected;
    m.kappa = den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    return m;
}

double overall_accuracy(const ConfusionMatrix& cm) {
    require_nonempty(cm, "overall accuracy");
    return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

double subset_accuracy(const ConfusionMatrix& cm, std::span<const std::size_t> classes) {
    std::uint64_t hit = 0, support = 0;
    for (auto k : classes) {
        if (k >= cm.classes()) throw DataError("subset class " + std::to_string(k) + " outside " + std::to_string(cm.classes()) + " classes");
        hit += cm.at(k, k);
        support += cm.row_sum(k);
    }
    if (support == 0) throw UndefinedMetricError("subset accuracy over classes without support");
    return static_cast<double>(hit) / static_cast<double>(support);
}

double kappa(const ConfusionMatrix& cm) {
    require_nonempty(cm, "kappa");
    const i128 n = cm.total();
    i128 expected = 0;
    for (std::size_t k = 0; k < cm.classes(); ++k) expected += i128(cm.row_sum(k)) * cm.col_sum(k);
    // (Po - Pe) / (1 - Pe) scaled by n^2
    const i128 num = n * cm.trace() - expected, den = n * n - expected;
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double mcc(const ConfusionMatrix& cm) {
    require_nonempty(cm, "MCC");
    const i128 s = cm.total(), c = cm.trace();
    i128 pt = 0, pp = 0, tt = 0;
    for (std::size_t k = 0; k < cm.classes(); ++k) {
        const i128 t = cm.row_sum(k), p = cm.col_sum(k);
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    const i128 num = c * s - pt;
    const double den = std::sqrt(static_cast<double>((s * s - pp) * (s * s - tt)));
    return den == 0.0 ? 0.0 : static_cast<double>(num) / den;
}

double average(std::span<const double> values, std::span<const std::uint64_t> supports, AverageMode mode) {
    if (values.size() != supports.size()) {
        throw DataError("average over " + std::to_string(values.size()) + " values with " + std::to_string(supports.size()) + " supports");
    }
    if (values.empty()) return 0.0;
    if (mode == AverageMode::macro) {
        double s = 0;
        for (double v : values) s += v;
        return s / static_cast<double>(values.size());
    }
    std::uint64_t total = 0;
    for (auto n : supports) total += n;
    if (total == 0) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) s += static_cast<double>(supports[i]) * values[i];
    return s / static_cast<double>(total);
}

ConfusionMatrix merge_confusion(const ConfusionMatrix& cm, const LabelSpace& space) {
    if (cm.classes() != kOriginalClasses) {
        throw DataError("label merging needs a 17 x 17 confusion matrix, got " + std::to_string(cm.classes()) + " classes");
    }
    if (space.mode() == LabelMode::original17) return cm;
    ConfusionMatrix out(space.num_classes(), space.class_names());
    const auto& map = space.merge_map();
    for (std::size_t i = 0; i < kOriginalClasses; ++i)
        for (std::size_t j = 0; j < kOriginalClasses; ++j) out.add(map[i], map[j], cm.at(i, j));
    return out;
}

MetricReport build_report(const ConfusionMatrix& cm, const LabelSpace& space) {
    if (cm.classes() != space.num_classes()) {
        throw DataError("confusion matrix has " + std::to_string(cm.classes()) + " classes, label space " +
                        std::to_string(space.num_classes()));
    }
    MetricReport r;
    r.class_names = cm.class_names();
    r.total = cm.total();
    r.overall_accuracy = overall_accuracy(cm);
    r.kappa = kappa(cm);
    r.mcc = mcc(cm);
    const auto bu = space.built_up_classes(), nat = space.natural_classes();
    try {
        r.oa_built_up = subset_accuracy(cm, bu);
    } catch (const UndefinedMetricError&) {
    }
    try {
        r.oa_natural = subset_accuracy(cm, nat);
    } catch (const UndefinedMetricError&) {
    }
    std::vector<double> p, rc, f, kp;
    std::vector<std::uint64_t> sup;
    for (std::size_t k = 0; k < cm.classes(); ++k) {
        r.per_class.push_back(class_metrics(cm, k));
        p.push_back(r.per_class.back().precision);
        rc.push_back(r.per_class.back().recall);
        f.push_back(r.per_class.back().f1);
        kp.push_back(r.per_class.back().kappa);
        sup.push_back(r.per_class.back().support);
    }
    for (auto [mode, dst] : {std::pair{AverageMode::macro, &r.macro}, std::pair{AverageMode::weighted, &r.weighted}}) {
        dst->precision = average(p, sup, mode);
        dst->recall = average(rc, sup, mode);
        dst->f1 = average(f, sup, mode);
        dst->kappa = average(kp, sup, mode);
    }
    return r;
}

std::string MetricReport::to_json(int indent) const {
    using json = nlohmann::ordered_json;
    auto averaged = [](const AveragedMetrics& a) {
        return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}, {"kappa", a.kappa}};
    };
    json j;
    j["total"] = total;
    j["overall_accuracy"] = overall_accuracy;
    j["oa_built_up"] = oa_built_up ? json(*oa_built_up) : json(nullptr);
    j["oa_natural"] = oa_natural ? json(*oa_natural) : json(nullptr);
    j["kappa"] = kappa;
    j["mcc"] = mcc;
    j["macro"] = averaged(macro);
    j["weighted"] = averaged(weighted);
    json rows = json::array();
    for (std::size_t k = 0; k < per_class.size(); ++k) {
        const auto& m = per_class[k];
        rows.push_back({{"class", class_names[k]},
                        {"support", m.support},
                        {"accuracy", m.accuracy},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"f1", m.f1},
                        {"kappa", m.kappa}});
    }
    j["per_class"] = std::move(rows);
    return j.dump(indent);
}

}  // namespace lcz
