#include "lczlab/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lczlab/error.hpp"
#include "lczlab/ops.hpp"

namespace lcz {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// normalization

Normalization Normalization::identity() {
    Normalization n;
    n.sar_std.fill(1.0);
    n.msi_std.fill(1.0);
    return n;
}

namespace {

template <std::size_t Bands>
void band_stats(const std::vector<PatchPair>& patches, bool sar, std::array<double, Bands>& mean,
                std::array<double, Bands>& stddev) {
    const std::size_t plane = kPatchSize * kPatchSize;
    for (std::size_t b = 0; b < Bands; ++b) {
        double s = 0, ss = 0;
        std::size_t n = 0;
        for (const auto& p : patches) {
            const Tensor& img = sar ? p.sar : p.msi;
            const Real* d = img.data().data() + b * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                s += d[j];
                ss += static_cast<double>(d[j]) * d[j];
            }
            n += plane;
        }
        if (n == 0) {
            mean[b] = 0;
            stddev[b] = 1;
            continue;
        }
        mean[b] = s / static_cast<double>(n);
        const double var = std::max(0.0, ss / static_cast<double>(n) - mean[b] * mean[b]);
        stddev[b] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
}

template <std::size_t Bands>
Tensor normalize_image(const Tensor& img, const std::array<double, Bands>& mean, const std::array<double, Bands>& sd) {
    Tensor out = img.clone();
    const std::size_t plane = img.numel() / Bands;
    for (std::size_t b = 0; b < Bands; ++b) {
        Real* d = out.data().data() + b * plane;
        for (std::size_t j = 0; j < plane; ++j) d[j] = static_cast<Real>((d[j] - mean[b]) / sd[b]);
    }
    return out;
}

}  // namespace

Normalization Normalization::from_patches(const std::vector<PatchPair>& patches) {
    Normalization n;
    band_stats<kSarBands>(patches, true, n.sar_mean, n.sar_std);
    band_stats<kMsiBands>(patches, false, n.msi_mean, n.msi_std);
    return n;
}

PatchPair Normalization::apply(const PatchPair& patch) const {
    PatchPair out;
    out.sar = normalize_image<kSarBands>(patch.sar, sar_mean, sar_std);
    out.msi = normalize_image<kMsiBands>(patch.msi, msi_mean, msi_std);
    out.label = patch.label;
    return out;
}

// ---------------------------------------------------------------------------
// checksums

std::string sha256_hex(const std::vector<unsigned char>& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

namespace {

std::vector<unsigned char> read_bytes(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& file, const std::vector<unsigned char>& bytes) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + file.string());
}

void put_f32(std::vector<unsigned char>& buf, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

float get_f32(const unsigned char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::vector<unsigned char> encode_split(const std::vector<PatchPair>& patches) {
    std::vector<unsigned char> buf;
    buf.reserve(patches.size() * kRecordBytes);
    for (const auto& p : patches) {
        validate_patch(p);
        for (Real v : p.sar.data()) put_f32(buf, static_cast<float>(v));
        for (Real v : p.msi.data()) put_f32(buf, static_cast<float>(v));
        buf.push_back(static_cast<unsigned char>(p.label & 0xff));
        buf.push_back(static_cast<unsigned char>(p.label >> 8));
    }
    return buf;
}

std::vector<PatchPair> decode_split(const std::vector<unsigned char>& buf, std::size_t count, std::size_t classes,
                                    const fs::path& file) {
    std::vector<PatchPair> out;
    out.reserve(count);
    const std::size_t sar_n = kSarBands * kPatchSize * kPatchSize, msi_n = kMsiBands * kPatchSize * kPatchSize;
    for (std::size_t r = 0; r < count; ++r) {
        const unsigned char* p = buf.data() + r * kRecordBytes;
        PatchPair pp;
        pp.sar = Tensor(Shape{kSarBands, kPatchSize, kPatchSize});
        pp.msi = Tensor(Shape{kMsiBands, kPatchSize, kPatchSize});
        for (std::size_t i = 0; i < sar_n; ++i) pp.sar[i] = static_cast<Real>(get_f32(p + 4 * i));
        p += 4 * sar_n;
        for (std::size_t i = 0; i < msi_n; ++i) pp.msi[i] = static_cast<Real>(get_f32(p + 4 * i));
        p += 4 * msi_n;
        pp.label = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        if (pp.label >= classes) {
            throw FormatError(file.string() + ": record " + std::to_string(r) + " has label " +
                              std::to_string(pp.label) + " outside " + std::to_string(classes) + " classes");
        }
        out.push_back(std::move(pp));
    }
    return out;
}

template <std::size_t N>
json to_json(const std::array<double, N>& a) {
    return json(std::vector<double>(a.begin(), a.end()));
}

template <std::size_t N>
void from_json_array(const json& j, std::array<double, N>& a, const std::string& what) {
    if (!j.is_array() || j.size() != N) throw FormatError("manifest field " + what + " must hold " + std::to_string(N) + " numbers");
    for (std::size_t i = 0; i < N; ++i) a[i] = j[i].get<double>();
}

json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["version"] = m.version;
    j["counts"] = {{"train", m.counts.train}, {"val", m.counts.val}, {"test", m.counts.test}};
    j["shapes"] = {{"sar", {kSarBands, kPatchSize, kPatchSize}}, {"msi", {kMsiBands, kPatchSize, kPatchSize}}};
    j["record_bytes"] = kRecordBytes;
    j["label_mode"] = m.label_mode == LabelMode::merged8 ? "merged8" : "original17";
    std::vector<std::string> sar_names, msi_names;
    for (const auto& g : BandGroupMap::singletons().sar_groups) sar_names.push_back(g.name);
    for (const auto& g : BandGroupMap::singletons().msi_groups) msi_names.push_back(g.name);
    j["bands"] = {{"sar", sar_names}, {"msi", msi_names}};
    j["normalization"] = {{"sar_mean", to_json(m.normalization.sar_mean)},
                          {"sar_std", to_json(m.normalization.sar_std)},
                          {"msi_mean", to_json(m.normalization.msi_mean)},
                          {"msi_std", to_json(m.normalization.msi_std)}};
    j["sha256"] = {{"train.bin", m.train_sha256}, {"val.bin", m.val_sha256}, {"test.bin", m.test_sha256}};
    return j;
}

}  // namespace

std::string sha256_file(const fs::path& file) { return sha256_hex(read_bytes(file)); }

DatasetManifest store_dataset(const fs::path& dir, const Dataset& dataset) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create dataset directory " + dir.string());
    DatasetManifest m = dataset.manifest;
    m.version = kDatasetFormatVersion;
    m.counts = {dataset.train.size(), dataset.val.size(), dataset.test.size()};
    m.normalization = Normalization::from_patches(dataset.train);
    const auto train = encode_split(dataset.train);
    const auto val = encode_split(dataset.val);
    const auto test = encode_split(dataset.test);
    m.train_sha256 = sha256_hex(train);
    m.val_sha256 = sha256_hex(val);
    m.test_sha256 = sha256_hex(test);
    write_bytes(dir / "train.bin", train);
    write_bytes(dir / "val.bin", val);
    write_bytes(dir / "test.bin", test);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest_to_json(m).dump(2) << '\n';
    return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
    const fs::path file = dir / "manifest.json";
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
    try {
        DatasetManifest m;
        m.version = j.at("version").get<std::string>();
        if (m.version != kDatasetFormatVersion) throw FormatError(file.string() + ": unsupported version " + m.version);
        m.counts.train = j.at("counts").at("train").get<std::size_t>();
        m.counts.val = j.at("counts").at("val").get<std::size_t>();
        m.counts.test = j.at("counts").at("test").get<std::size_t>();
        m.label_mode = LabelSpace::from_name(j.at("label_mode").get<std::string>()).mode();
        const json& norm = j.at("normalization");
        from_json_array(norm.at("sar_mean"), m.normalization.sar_mean, "sar_mean");
        from_json_array(norm.at("sar_std"), m.normalization.sar_std, "sar_std");
        from_json_array(norm.at("msi_mean"), m.normalization.msi_mean, "msi_mean");
        from_json_array(norm.at("msi_std"), m.normalization.msi_std, "msi_std");
        m.train_sha256 = j.at("sha256").at("train.bin").get<std::string>();
        m.val_sha256 = j.at("sha256").at("val.bin").get<std::string>();
        m.test_sha256 = j.at("sha256").at("test.bin").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

Dataset load_dataset(const fs::path& dir) {
    Dataset ds;
    ds.manifest = read_manifest(dir);
    const std::size_t classes = ds.manifest.label_mode == LabelMode::merged8 ? kMergedClasses : kOriginalClasses;
    auto load_split = [&](const char* name, std::size_t count, const std::string& sha) {
        const fs::path file = dir / name;
        const auto bytes = read_bytes(file);
        if (bytes.size() != count * kRecordBytes) {
            throw FormatError(file.string() + ": manifest lists " + std::to_string(count) + " records (" +
                              std::to_string(count * kRecordBytes) + " bytes) but payload holds " +
                              std::to_string(bytes.size()) + " bytes");
        }
        if (sha256_hex(bytes) != sha) throw CorruptionError(file.string() + ": SHA-256 mismatch");
        return decode_split(bytes, count, classes, file);
    };
    ds.train = load_split("train.bin", ds.manifest.counts.train, ds.manifest.train_sha256);
    ds.val = load_split("val.bin", ds.manifest.counts.val, ds.manifest.val_sha256);
    ds.test = load_split("test.bin", ds.manifest.counts.test, ds.manifest.test_sha256);
    return ds;
}

// ---------------------------------------------------------------------------
// synthetic generator

std::string informative_name(Informative informative) {
    switch (informative) {
        case Informative::both: return "both";
        case Informative::sar_only: return "sar";
        case Informative::msi_only: return "msi";
    }
    return "both";
}

Informative informative_from_name(const std::string& name) {
    if (name == "both") return Informative::both;
    if (name == "sar") return Informative::sar_only;
    if (name == "msi") return Informative::msi_only;
    throw ConfigError("unknown informative modality '" + name + "' (expected both, sar or msi)");
}

namespace {

struct ModalityTemplate {
    std::vector<double> profile;  // per band
    std::vector<double> phase;    // per band
    int fx = 1;
    int fy = 1;
};

std::vector<ModalityTemplate> make_templates(std::size_t codes, std::size_t bands, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> freq(1, 4);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<ModalityTemplate> out(codes);
    for (auto& t : out) {
        t.profile.resize(bands);
        t.phase.resize(bands);
        for (auto& v : t.profile) v = normal(rng);
        for (auto& v : t.phase) v = angle(rng);
        t.fx = freq(rng);
        t.fy = freq(rng);
    }
    return out;
}

struct SharedField {
    int gx = 1, gy = 1;
    double phase = 0;
};

void render(Tensor& img, const ModalityTemplate& t, const SharedField& shared, double offset, double scale,
            double noise, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t bands = img.dim(0);
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    for (std::size_t b = 0; b < bands; ++b) {
        for (std::size_t y = 0; y < kPatchSize; ++y) {
            for (std::size_t x = 0; x < kPatchSize; ++x) {
                const double u = static_cast<double>(x) / kPatchSize, v = static_cast<double>(y) / kPatchSize;
                const double texture = 0.8 * std::sin(kTwoPi * (t.fx * u + t.fy * v) + t.phase[b]);
                const double common = 0.5 * noise * std::sin(kTwoPi * (shared.gx * u + shared.gy * v) + shared.phase);
                const double value = t.profile[b] + texture + common + noise * normal(rng);
                img[(b * kPatchSize + y) * kPatchSize + x] = static_cast<Real>(offset + scale * value);
            }
        }
    }
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config) {
    if (config.classes == 0 || config.classes > kOriginalClasses) {
        throw ParameterError("synthetic class count must lie in 1..17, got " + std::to_string(config.classes));
    }
    if (config.per_class == 0) throw ParameterError("synthetic per-class count must be at least 1");
    if (!(config.noise >= 0.0) || !std::isfinite(config.noise)) {
        throw ParameterError("synthetic noise level must be finite and non-negative");
    }
    const auto m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(config.classes))));
    Rng template_rng(config.seed * 0x9e3779b97f4a7c15ull + 0x243f6a8885a308d3ull);
    const auto sar_templates = make_templates(m, kSarBands, template_rng);
    const auto msi_templates = make_templates(m, kMsiBands, template_rng);

    Rng rng(config.seed);
    std::uniform_int_distribution<int> shared_freq(1, 2);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const std::size_t hold = config.per_class * 15 / 100;
    const std::size_t n_train = config.per_class - 2 * hold;

    Dataset ds;
    for (std::size_t k = 0; k < config.classes; ++k) {
        const std::size_t sar_code = config.informative == Informative::msi_only ? 0 : k / m;
        const std::size_t msi_code = config.informative == Informative::sar_only ? 0 : k % m;
        for (std::size_t i = 0; i < config.per_class; ++i) {
            PatchPair p;
            p.sar = Tensor(Shape{kSarBands, kPatchSize, kPatchSize});
            p.msi = Tensor(Shape{kMsiBands, kPatchSize, kPatchSize});
            p.label = static_cast<std::uint16_t>(k);
            SharedField shared{shared_freq(rng), shared_freq(rng), angle(rng)};
            render(p.sar, sar_templates[sar_code], shared, 0.0, 1.0, config.noise, rng);
            render(p.msi, msi_templates[msi_code], shared, 0.15, 0.05, config.noise, rng);
            if (i < n_train) {
                ds.train.push_back(std::move(p));
            } else if (i < n_train + hold) {
                ds.val.push_back(std::move(p));
            } else {
                ds.test.push_back(std::move(p));
            }
        }
    }
    Rng shuffle_rng(config.seed ^ 0x5851f42d4c957f2dull);
    std::shuffle(ds.train.begin(), ds.train.end(), shuffle_rng);
    std::shuffle(ds.val.begin(), ds.val.end(), shuffle_rng);
    std::shuffle(ds.test.begin(), ds.test.end(), shuffle_rng);
    ds.manifest.counts = {ds.train.size(), ds.val.size(), ds.test.size()};
    ds.manifest.label_mode = LabelMode::original17;
    ds.manifest.normalization = Normalization::from_patches(ds.train);
    return ds;
}

}  // namespace lcz
