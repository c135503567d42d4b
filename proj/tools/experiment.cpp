#include "experiment.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include "lczlab/error.hpp"

namespace lcz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T get_as(const std::string& key, const json& value) {
    try {
        return value.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type: " + value.dump());
    }
}

std::size_t get_count(const std::string& key, const json& value) {
    if (!value.is_number_integer() || value.get<std::int64_t>() < 0) throw ConfigError("config key '" + key + "' must be a non-negative integer");
    return value.get<std::size_t>();
}

double get_real(const std::string& key, const json& value) {
    if (!value.is_number()) throw ConfigError("config key '" + key + "' must be a number");
    return value.get<double>();
}

std::vector<Variant> get_variants(const std::string& key, const json& value) {
    std::vector<std::string> names;
    if (value.is_string()) {
        // Comma-separated, as given on the command line.
        std::string s = value.get<std::string>(), item;
        for (char c : s + ",") {
            if (c == ',') {
                if (!item.empty()) names.push_back(item);
                item.clear();
            } else if (c != ' ') {
                item += c;
            }
        }
    } else {
        names = get_as<std::vector<std::string>>(key, value);
    }
    std::vector<Variant> out;
    for (const auto& n : names) out.push_back(variant_from_name(n));
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const json&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"seed", [](auto& c, auto& k, auto& v) { c.seed = get_count(k, v); }},
        {"out", [](auto& c, auto& k, auto& v) { c.out = get_as<std::string>(k, v); }},
        {"model.variant", [](auto& c, auto& k, auto& v) { c.variant = variant_from_name(get_as<std::string>(k, v)); }},
        {"model.band_grouping", [](auto& c, auto& k, auto& v) { c.band_grouping = get_as<bool>(k, v); }},
        {"model.merge_labels", [](auto& c, auto& k, auto& v) { c.merge_labels = get_as<bool>(k, v); }},
        {"model.attention_heads", [](auto& c, auto& k, auto& v) { c.attention_heads = get_count(k, v); }},
        {"model.scale_sizes",
         [](auto& c, auto& k, auto& v) { c.scale_sizes = get_as<std::vector<std::size_t>>(k, v); }},
        {"model.alpha", [](auto& c, auto& k, auto& v) { c.alpha = get_real(k, v); }},
        {"train.learning_rate", [](auto& c, auto& k, auto& v) { c.train.learning_rate = get_real(k, v); }},
        {"train.epochs", [](auto& c, auto& k, auto& v) { c.train.epochs = get_count(k, v); }},
        {"train.batch_size", [](auto& c, auto& k, auto& v) { c.train.batch_size = get_count(k, v); }},
        {"train.dropout_rate", [](auto& c, auto& k, auto& v) { c.train.dropout_rate = get_real(k, v); }},
        {"train.early_stop_patience", [](auto& c, auto& k, auto& v) { c.train.early_stop_patience = get_count(k, v); }},
        {"data.path", [](auto& c, auto& k, auto& v) { c.data_path = get_as<std::string>(k, v); }},
        {"data.classes", [](auto& c, auto& k, auto& v) { c.synthetic.classes = get_count(k, v); }},
        {"data.per_class", [](auto& c, auto& k, auto& v) { c.synthetic.per_class = get_count(k, v); }},
        {"data.noise", [](auto& c, auto& k, auto& v) { c.synthetic.noise = get_real(k, v); }},
        {"data.informative",
         [](auto& c, auto& k, auto& v) { c.synthetic.informative = informative_from_name(get_as<std::string>(k, v)); }},
        {"ablate.variants", [](auto& c, auto& k, auto& v) { c.ablate_variants = get_variants(k, v); }},
        {"report.checkpoint", [](auto& c, auto& k, auto& v) { c.checkpoint = get_as<std::string>(k, v); }},
        {"report.grid_width", [](auto& c, auto& k, auto& v) { c.grid_width = get_count(k, v); }},
        {"report.grid_height", [](auto& c, auto& k, auto& v) { c.grid_height = get_count(k, v); }},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

ExperimentConfig ExperimentConfig::from_values(const ConfigValues& values) {
    ExperimentConfig config;
    for (const auto& [key, value] : values) {
        const auto& table = setters();
        auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
        if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second(config, key, value);
    }
    config.synthetic.seed = config.seed;
    config.train.seed = config.seed;
    try {
        config.train.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    if (config.grid_width == 0 || config.grid_height == 0) throw ConfigError("grid extents must be positive");
    return config;
}

ModelSpec ExperimentConfig::model_spec(Variant v) const {
    ModelSpec spec = ModelSpec::for_variant(v, merge_labels ? LabelMode::merged8 : LabelMode::original17);
    spec.band_grouping = band_grouping;
    if (attention_heads && is_attention_variant(v)) spec.attention_heads = attention_heads;
    if (scale_sizes && is_scale_space_variant(v)) spec.scale_spec = ScaleSpec{*scale_sizes};
    if (alpha && v == Variant::FM4) spec.alpha = alpha;
    spec.dropout_rate = train.dropout_rate;
    spec.validate();
    return spec;
}

ConfigValues read_config_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config file " + file.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    ConfigValues values;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_object())
            throw ConfigError("config keys are flat and dotted; '" + it.key() + "' holds an object");
        values[it.key()] = it.value();
    }
    return values;
}

std::string dataset_fingerprint(const DatasetManifest& manifest) {
    const std::string joined = manifest.train_sha256 + manifest.val_sha256 + manifest.test_sha256;
    return sha256_hex(std::vector<unsigned char>(joined.begin(), joined.end()));
}

Dataset resolve_dataset(const ExperimentConfig& config) {
    if (config.data_path) return load_dataset(*config.data_path);
    const fs::path dir = config.out / "dataset";
    store_dataset(dir, generate_synthetic(config.synthetic));
    return load_dataset(dir);
}

}  // namespace lcz::cli
