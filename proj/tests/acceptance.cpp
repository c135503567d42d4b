// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "lczlab/metrics.hpp"
#include "lczlab/scale_space.hpp"
#include "lczlab/training.hpp"
#include "metric_oracle.hpp"
#include "temp_dir.hpp"

using namespace lcz;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 3) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(precision);
    os << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(2);
    os << v;
    return os.str();
}

Dataset synthetic(std::size_t classes, std::size_t per_class, std::uint64_t seed, double noise,
                  Informative informative = Informative::both) {
    SyntheticConfig cfg;
    cfg.classes = classes;
    cfg.per_class = per_class;
    cfg.seed = seed;
    cfg.noise = noise;
    cfg.informative = informative;
    auto data = generate_synthetic(cfg);
    data.manifest.normalization = Normalization::from_patches(data.train);
    return data;
}

double accuracy(const ConfusionMatrix& cm) {
    return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

// 1. finite-difference gradient suite, run as its own binary

Outcome gradient_suite() {
    const auto start = Clock::now();
    const std::string cmd = std::string("\"") + LCZLAB_TEST_GRADIENTS + "\" --gtest_brief=1 > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    const double secs = seconds_since(start);
    const bool ok = status == 0 && secs < 120.0;
    return {ok, "exit status " + std::to_string(status) + ", " + fmt(secs, 1) + " s (limit 120 s)"};
}

// 2. metrics against label-list recomputation

Outcome metric_oracle() {
    std::mt19937_64 rng(2024);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t K = 2 + rng() % 16, N = 1 + rng() % 500;
        std::vector<std::size_t> y(N), p(N);
        for (std::size_t i = 0; i < N; ++i) {
            y[i] = rng() % K;
            p[i] = (rng() % 3 == 0) ? y[i] : rng() % K;
        }
        const auto cm = ConfusionMatrix::from_labels(y, p, K);
        const auto b = testing_util::brute_force(y, p, K);
        auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
        for (std::size_t k = 0; k < K; ++k) {
            const auto m = class_metrics(cm, k);
            track(m.precision, b.precision[k]);
            track(m.recall, b.recall[k]);
            track(m.f1, b.f1[k]);
        }
        track(overall_accuracy(cm), b.oa);
        track(kappa(cm), b.kappa);
        track(mcc(cm), b.mcc);
    }
    ConfusionMatrix two(2);
    two.at(0, 0) = 8, two.at(0, 1) = 2, two.at(1, 0) = 3, two.at(1, 1) = 7;
    // Integer form: (N*trace - sum r*c) / (N^2 - sum r*c) = 100 / 200.
    const std::uint64_t n = two.total(), rc = two.row_sum(0) * two.col_sum(0) + two.row_sum(1) * two.col_sum(1);
    const bool rational = 2 * (n * two.trace() - rc) == n * n - rc;
    const double k = kappa(two);
    const bool ok = worst <= 1e-12 && k == 0.5 && rational;
    return {ok, "max abs deviation " + sci(worst) + " (limit 1e-12), kappa[[8,2],[3,7]] = " + fmt(k, 17)};
}

// 3. label merging

struct MergedRow {
    const char* name;
    std::vector<std::size_t> originals;  // class indices: LCZ 1-10 -> 0-9, A-G -> 10-16
};

Outcome merge_laws() {
    const auto space = LabelSpace::merged();
    std::mt19937_64 rng(17);
    std::geometric_distribution<std::uint64_t> count(0.05);
    std::size_t violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        ConfusionMatrix cm(kOriginalClasses);
        for (std::size_t i = 0; i < kOriginalClasses; ++i)
            for (std::size_t j = 0; j < kOriginalClasses; ++j) cm.at(i, j) = rng() % 4 == 0 ? count(rng) : 0;
        cm.add(rng() % kOriginalClasses, rng() % kOriginalClasses);
        const auto merged = merge_confusion(cm, space);
        if (merged.total() != cm.total() || overall_accuracy(merged) < overall_accuracy(cm)) ++violations;
    }
    const std::vector<MergedRow> published = {
        {"Compact built types", {0, 1, 2}},  {"Open built types", {3, 4, 5}}, {"Low-rise built types", {6, 7, 8}},
        {"Heavy industry", {9}},             {"Dense vegetation", {10, 11}},  {"Low vegetation", {12, 13}},
        {"Bare surfaces", {14, 15}},         {"Water", {16}},
    };
    std::size_t rows_ok = 0;
    std::vector<bool> covered(kOriginalClasses, false);
    for (std::size_t m = 0; m < published.size(); ++m) {
        bool row = space.class_names().at(m) == published[m].name;
        for (std::size_t o : published[m].originals) {
            row = row && space.map(o) == m && !covered[o];
            covered[o] = true;
        }
        rows_ok += row;
    }
    const bool all_covered = std::all_of(covered.begin(), covered.end(), [](bool c) { return c; });
    const bool ok = violations == 0 && rows_ok == published.size() && all_covered &&
                    space.num_classes() == published.size();
    return {ok, std::to_string(violations) + " law violations in 1000 matrices, " + std::to_string(rows_ok) +
                    "/8 merged rows match the published groups"};
}

// 4. band grouping

Outcome band_grouping() {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> dist(0.0, 1.0);
    const auto map = BandGroupMap::standard();
    std::size_t exact = 0;
    auto bits_equal = [](const Tensor& a, const Tensor& b) {
        if (a.shape() != b.shape()) return false;
        for (std::size_t i = 0; i < a.numel(); ++i)
            if (std::bit_cast<std::uint32_t>(static_cast<float>(a[i])) !=
                std::bit_cast<std::uint32_t>(static_cast<float>(b[i])))
                return false;
        return true;
    };
    for (int trial = 0; trial < 100; ++trial) {
        PatchPair p;
        p.sar = Tensor(Shape{kSarBands, kPatchSize, kPatchSize});
        p.msi = Tensor(Shape{kMsiBands, kPatchSize, kPatchSize});
        for (Real& v : p.sar.data()) v = static_cast<Real>(dist(rng));
        for (Real& v : p.msi.data()) v = static_cast<Real>(dist(rng));
        p.label = static_cast<std::uint16_t>(rng() % kOriginalClasses);
        const auto back = reconstruct_from_groups(apply_band_grouping(p, map), map, p.label);
        exact += bits_equal(back.sar, p.sar) && bits_equal(back.msi, p.msi) && back.label == p.label;
    }
    std::vector<std::size_t> sar_counts, msi_counts;
    for (const auto& g : map.sar_groups) sar_counts.push_back(g.bands.size());
    for (const auto& g : map.msi_groups) msi_counts.push_back(g.bands.size());
    auto show = [](const std::vector<std::size_t>& v) {
        std::string s = "(";
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s + ")";
    };
    const bool ok = exact == 100 && sar_counts == std::vector<std::size_t>{3, 3, 2} &&
                    msi_counts == std::vector<std::size_t>{3, 4, 2, 1};
    return {ok, std::to_string(exact) + "/100 bit-exact round trips, group channels " + show(sar_counts) + "/" +
                    show(msi_counts)};
}

// 5. FM1 fits a small training set

Outcome overfit() {
    const auto start = Clock::now();
    const auto data = synthetic(4, 22, 0, 0.5);
    auto net = FusionNetwork::build(ModelSpec::for_variant(Variant::FM1), 0);
    const TrainConfig cfg;  // published defaults: lr 1e-4, dropout 0.2, batch 32
    Trainer trainer(*net, data, cfg);
    double acc = 0;
    std::size_t epoch = 0;
    while (epoch < 200 && acc < 0.95) {
        trainer.run_epoch();
        ++epoch;
        acc = accuracy(evaluate(*net, data.train, data.manifest.normalization, data.manifest.label_mode));
    }
    const double secs = seconds_since(start);
    const bool ok = data.train.size() == 64 && acc >= 0.95 && secs < 600.0;
    return {ok, std::to_string(data.train.size()) + " patches, train accuracy " + fmt(acc) + " after " +
                    std::to_string(epoch) + " epochs, " + fmt(secs, 1) + " s (limit 600 s)"};
}

// 6. fusing both modalities beats either alone

double fm1_test_oa(Informative informative, std::uint64_t seed) {
    const auto data = synthetic(4, 40, seed, 0.5, informative);
    auto net = FusionNetwork::build(ModelSpec::for_variant(Variant::FM1), seed);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 8;
    cfg.seed = seed;
    train(*net, data, cfg);
    return accuracy(evaluate(*net, data.test, data.manifest.normalization, data.manifest.label_mode));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

Outcome fusion_value() {
    const auto start = Clock::now();
    std::vector<double> both, sar, msi;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        both.push_back(fm1_test_oa(Informative::both, seed));
        sar.push_back(fm1_test_oa(Informative::sar_only, seed));
        msi.push_back(fm1_test_oa(Informative::msi_only, seed));
    }
    const double mb = median(both), ms = median(sar), mm = median(msi);
    const bool ok = mb - ms >= 0.10 && mb - mm >= 0.10;
    return {ok, "median test OA both " + fmt(mb) + ", sar_only " + fmt(ms) + ", msi_only " + fmt(mm) + ", " +
                    fmt(seconds_since(start), 1) + " s"};
}

// 7. FM4 convex combination and alpha tuning

Tensor& parameter(FusionNetwork& net, const std::string& name) {
    auto& params = net.parameters();
    for (std::size_t i = 0; i < params.parameter_count(); ++i)
        if (params.parameter(i).name == name) return params.parameter(i).tensor;
    throw std::out_of_range(name);
}

// Output head constant over inputs: bias[k] per class, zero weights.
void constant_head(FusionNetwork& net, const std::string& prefix, const std::vector<std::pair<std::size_t, Real>>& bias) {
    Tensor& w = parameter(net, prefix + "head.out.weight");
    Tensor& b = parameter(net, prefix + "head.out.bias");
    std::fill(w.data().begin(), w.data().end(), Real(0));
    std::fill(b.data().begin(), b.data().end(), Real(-10));
    for (const auto& [k, v] : bias) b[k] = v;
}

Outcome fm4_convexity_and_tuning() {
    std::size_t outside = 0, checked = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto net = FusionNetwork::build(ModelSpec::for_variant(Variant::FM4), seed);
        net->set_mode(Mode::infer);
        std::mt19937_64 rng(300 + seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<PatchPair> batch(2);
        for (auto& p : batch) {
            p.sar = Tensor(Shape{kSarBands, kPatchSize, kPatchSize});
            p.msi = Tensor(Shape{kMsiBands, kPatchSize, kPatchSize});
            for (Real& v : p.sar.data()) v = static_cast<Real>(dist(rng));
            for (Real& v : p.msi.data()) v = static_cast<Real>(dist(rng));
        }
        const auto in = net->prepare(batch);
        for (double alpha : default_alpha_grid()) {
            net->set_alpha(alpha);
            const auto out = net->forward_full(in);
            const Tensor &u = out.branch_probs[0], &c = out.branch_probs[1];
            for (std::size_t i = 0; i < out.probs.numel(); ++i, ++checked)
                outside += out.probs[i] < std::min(u[i], c[i]) || out.probs[i] > std::max(u[i], c[i]);
        }
    }

    // The U-Net is right on every validation patch by a small margin; the CNN
    // is confidently wrong. Only alpha = 1 keeps the U-Net decision.
    const auto data = synthetic(4, 7, 3, 0.5);
    std::vector<PatchPair> val;
    for (const auto& p : data.train)
        if (p.label == 2) val.push_back(p);
    auto net = FusionNetwork::build(ModelSpec::for_variant(Variant::FM4), 7);
    constant_head(*net, "unet.", {{2, Real(10)}, {1, Real(9.95)}});
    constant_head(*net, "cnn.", {{1, Real(10)}});
    std::vector<double> grid_oa;
    const auto grid = default_alpha_grid();
    const double alpha = tune_alpha(*net, val, data.manifest.normalization, data.manifest.label_mode, grid,
                                    [&](double, double oa) { grid_oa.push_back(oa); });
    const bool dominant = grid_oa.size() == grid.size() && grid_oa.back() == 1.0 &&
                          std::all_of(grid_oa.begin(), grid_oa.end() - 1, [](double v) { return v < 1.0; });

    const bool ok = outside == 0 && grid.size() == 11 && dominant && alpha == 1.0;
    return {ok, std::to_string(outside) + "/" + std::to_string(checked) + " outputs outside branch bounds, tuned alpha " +
                    fmt(alpha, 1) + " over " + std::to_string(grid.size()) + " grid values"};
}

// 8. repeated training runs are byte-identical

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    testing_util::TempDir tmp;
    const std::vector<std::string> files = {"checkpoint/manifest.json", "checkpoint/params.bin", "train_log.csv",
                                            "summary.json"};
    std::size_t identical = 0, compared = 0;
    for (const char* variant : {"fm1", "fm4"}) {
        for (const char* run : {"a", "b"}) {
            const std::string out = (tmp.path() / variant / run).string();
            const std::vector<std::string> args = {"lczlab", "train",     "--variant", variant, "--epochs",
                                                   "2",      "--classes", "4",         "--per-class", "7",
                                                   "--seed", "11",        "--out",     out};
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream sink;
            if (cli::run(static_cast<int>(argv.size()), argv.data(), sink, sink) != cli::kExitOk)
                return {false, std::string(variant) + " training run failed: " + sink.str()};
        }
        for (const auto& f : files) {
            const auto a = slurp(tmp.path() / variant / "a" / f), b = slurp(tmp.path() / variant / "b" / f);
            ++compared;
            identical += !a.empty() && a == b;
        }
    }
    return {identical == compared, std::to_string(identical) + "/" + std::to_string(compared) +
                                       " files byte-identical across two FM1 and two FM4 runs"};
}

// 9. smoothing

Outcome smoothing_laws() {
    double worst_sum = 0;
    for (std::size_t size = 1; size <= 16; ++size) {
        const auto k = gaussian_kernel(size, ScaleSpec::sigma_for(size));
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(k.weights.begin(), k.weights.end(), 0.0) - 1.0));
    }
    const ScaleSpec spec;
    double worst_fixed = 0;
    for (Real c : {Real(-3.25), Real(0), Real(1), Real(1234.5)}) {
        Tensor img(Shape{3, 32, 32});
        std::fill(img.data().begin(), img.data().end(), c);
        for (std::size_t size : spec.kernel_sizes) {
            const Tensor out = gaussian_smooth(img, gaussian_kernel(size, ScaleSpec::sigma_for(size)));
            for (Real v : out.data())
                worst_fixed = std::max(worst_fixed, std::abs(double(v) - c) / std::max(1.0, std::abs(double(c))));
        }
    }
    std::size_t increases = 0, sequences = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        Tensor img(Shape{kMsiBands, kPatchSize, kPatchSize});
        for (Real& v : img.data()) v = static_cast<Real>(dist(rng));
        const Tensor stack = scale_stack(img, spec);
        const std::size_t plane = kPatchSize * kPatchSize;
        auto variance = [&](const Tensor& t, std::size_t ch) {
            double m = 0, s = 0;
            for (std::size_t i = 0; i < plane; ++i) m += t[ch * plane + i];
            m /= plane;
            for (std::size_t i = 0; i < plane; ++i) s += (t[ch * plane + i] - m) * (t[ch * plane + i] - m);
            return s / plane;
        };
        for (std::size_t b = 0; b < kMsiBands; ++b, ++sequences) {
            double prev = variance(img, b);
            for (std::size_t s = 0; s < spec.kernel_sizes.size(); ++s) {
                const double v = variance(stack, s * kMsiBands + b);
                increases += v > prev;
                prev = v;
            }
        }
    }
    const bool ok = worst_sum <= 1e-9 && worst_fixed <= 1e-6 && increases == 0;
    return {ok, "max |sum-1| " + sci(worst_sum) + ", max constant drift " + sci(worst_fixed) +
                    ", " + std::to_string(increases) + " variance increases over " + std::to_string(sequences) +
                    " noisy channels"};
}

}  // namespace

// Optional arguments pick criteria by number; default runs all.
int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient suite", gradient_suite},
        {"metric oracle", metric_oracle},
        {"label-merge laws", merge_laws},
        {"band-grouping losslessness", band_grouping},
        {"overfit capability", overfit},
        {"fusion value on synthetic data", fusion_value},
        {"FM4 convexity and tuning", fm4_convexity_and_tuning},
        {"determinism", determinism},
        {"smoothing laws", smoothing_laws},
    };
    std::vector<bool> selected(criteria.size(), argc == 1);
    for (int a = 1; a < argc; ++a) {
        const int n = std::atoi(argv[a]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::cerr << "unknown criterion " << argv[a] << '\n';
            return 2;
        }
        selected[n - 1] = true;
    }
    int failures = 0, ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected[i]) continue;
        ++ran;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (ran - failures) << "/" << ran << " criteria met" << std::endl;
    return failures == 0 ? 0 : 1;
}
