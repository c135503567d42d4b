#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lczlab/dataset.hpp"
#include "lczlab/model.hpp"
#include "lczlab/training.hpp"

namespace lcz::cli {

/// Flat dotted keys, e.g. {"model.variant": "FM2", "train.epochs": 5}.
using ConfigValues = std::map<std::string, nlohmann::json>;

/// Everything one command needs. One `seed` drives network initialization,
/// the training shuffle and dropout, and synthetic generation.
struct ExperimentConfig {
    Variant variant = Variant::FM1;
    bool band_grouping = false;
    bool merge_labels = false;
    std::optional<std::size_t> attention_heads;
    std::optional<std::vector<std::size_t>> scale_sizes;
    std::optional<double> alpha;

    TrainConfig train;

    std::optional<std::filesystem::path> data_path;
    SyntheticConfig synthetic;

    std::filesystem::path out = "lczlab_out";
    std::uint64_t seed = 0;

    std::vector<Variant> ablate_variants;
    std::optional<std::filesystem::path> checkpoint;
    std::size_t grid_width = 20;
    std::size_t grid_height = 20;

    /// Throws ConfigError on unknown keys or values of the wrong type.
    static ExperimentConfig from_values(const ConfigValues& values);

    /// Spec for `variant`; fields that do not apply to it are dropped.
    /// Throws ConfigError if the result is inconsistent.
    ModelSpec model_spec(Variant variant) const;
    ModelSpec model_spec() const { return model_spec(variant); }
};

/// Every accepted key.
const std::vector<std::string>& config_keys();

/// Reads a JSON object of flat dotted keys. Throws ConfigError when the file
/// is missing or malformed or nests objects.
ConfigValues read_config_file(const std::filesystem::path& file);

/// Digest of a dataset's three split checksums.
std::string dataset_fingerprint(const DatasetManifest& manifest);

/// Loads `data_path`, or generates the synthetic set into `<out>/dataset`
/// and loads it back so checksums are real.
Dataset resolve_dataset(const ExperimentConfig& config);

}  // namespace lcz::cli
