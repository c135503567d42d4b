#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lczlab/data.hpp"

namespace lcz {

/// Per-band z-score statistics, computed on the training split.
struct Normalization {
    std::array<double, kSarBands> sar_mean{};
    std::array<double, kSarBands> sar_std{};
    std::array<double, kMsiBands> msi_mean{};
    std::array<double, kMsiBands> msi_std{};

    static Normalization identity();
    static Normalization from_patches(const std::vector<PatchPair>& patches);
    PatchPair apply(const PatchPair& patch) const;
};

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

struct DatasetManifest {
    std::string version = "1";
    SplitCounts counts;
    LabelMode label_mode = LabelMode::original17;
    Normalization normalization = Normalization::identity();
    std::string train_sha256;
    std::string val_sha256;
    std::string test_sha256;
};

struct Dataset {
    std::vector<PatchPair> train;
    std::vector<PatchPair> val;
    std::vector<PatchPair> test;
    DatasetManifest manifest;
};

inline constexpr std::size_t kRecordBytes = (kSarBands + kMsiBands) * kPatchSize * kPatchSize * 4 + 2;
inline constexpr const char* kDatasetFormatVersion = "1";

/// Writes manifest.json and train.bin/val.bin/test.bin into `dir`
/// (created if needed). Normalization statistics are recomputed from the
/// training split; checksums are filled in. Returns the written manifest.
DatasetManifest store_dataset(const std::filesystem::path& dir, const Dataset& dataset);

DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Reads and verifies a dataset directory. Throws FormatError when a payload
/// size disagrees with the manifest and CorruptionError on checksum mismatch.
Dataset load_dataset(const std::filesystem::path& dir);

std::string sha256_hex(const std::vector<unsigned char>& bytes);
std::string sha256_file(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// synthetic data

/// Which modality carries class information. `sar_only` keeps the SAR half of
/// each class code and makes MSI class-independent; `msi_only` the reverse.
enum class Informative { both, sar_only, msi_only };

struct SyntheticConfig {
    std::size_t classes = kOriginalClasses;
    std::size_t per_class = 20;
    std::uint64_t seed = 0;
    double noise = 0.5;
    Informative informative = Informative::both;
};

/// Deterministic SAR/MSI scenes. Class k is factored into a SAR code k / m and
/// an MSI code k % m (m = ceil(sqrt(classes))); each code owns a per-band
/// mean profile and a 2-D sinusoidal texture. Neither modality alone
/// identifies the class. A shared class-independent field makes the two
/// images correlated. Splits are stratified 70/15/15 per class.
Dataset generate_synthetic(const SyntheticConfig& config);

std::string informative_name(Informative informative);
Informative informative_from_name(const std::string& name);

}  // namespace lcz
