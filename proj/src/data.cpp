#include "lczlab/data.hpp"

#include <algorithm>
#include <sstream>

#include "lczlab/error.hpp"

namespace lcz {

void validate_patch(const PatchPair& patch) {
    const Shape sar_shape{kSarBands, kPatchSize, kPatchSize};
    const Shape msi_shape{kMsiBands, kPatchSize, kPatchSize};
    if (patch.sar.shape() != sar_shape) throw DataError("SAR image must be " + shape_str(sar_shape) + ", got " + shape_str(patch.sar.shape()));
    if (patch.msi.shape() != msi_shape) throw DataError("MSI image must be " + shape_str(msi_shape) + ", got " + shape_str(patch.msi.shape()));
    if (patch.label >= kOriginalClasses) throw DataError("label " + std::to_string(patch.label) + " outside 0..16");
}

// ---------------------------------------------------------------------------
// band grouping

BandGroupMap BandGroupMap::standard() {
    BandGroupMap m;
    m.sar_groups = {{"VH", {0, 1, 4}}, {"VV", {2, 3, 5}}, {"CMOE", {6, 7}}};
    // storage order: B2 B3 B4 B5 B6 B7 B8 B8a B11 B12
    m.msi_groups = {{"RGB", {0, 1, 2}}, {"VRE", {3, 4, 5, 7}}, {"SWIR", {8, 9}}, {"NIR", {6}}};
    return m;
}

BandGroupMap BandGroupMap::singletons() {
    BandGroupMap m;
    for (std::size_t b = 0; b < kSarBands; ++b) m.sar_groups.push_back({"S" + std::to_string(b + 1), {b}});
    static const char* kMsiNames[] = {"B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8a", "B11", "B12"};
    for (std::size_t b = 0; b < kMsiBands; ++b) m.msi_groups.push_back({kMsiNames[b], {b}});
    return m;
}

namespace {

void check_partition(const std::vector<BandGroup>& groups, std::size_t bands, const std::string& modality) {
    std::vector<int> seen(bands, 0);
    std::vector<std::size_t> out_of_range;
    for (const auto& g : groups) {
        if (g.bands.empty()) throw ConfigError(modality + " group '" + g.name + "' is empty");
        for (auto b : g.bands) {
            if (b >= bands) {
                out_of_range.push_back(b);
            } else {
                ++seen[b];
            }
        }
    }
    std::vector<std::size_t> missing, duplicated;
    for (std::size_t b = 0; b < bands; ++b) {
        if (seen[b] == 0) missing.push_back(b);
        if (seen[b] > 1) duplicated.push_back(b);
    }
    if (missing.empty() && duplicated.empty() && out_of_range.empty()) return;
    auto list = [](const std::vector<std::size_t>& v) {
        std::ostringstream os;
        os << '{';
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << '}';
        return os.str();
    };
    throw ConfigError(modality + " band groups do not partition 0.." + std::to_string(bands - 1) +
                      ": missing " + list(missing) + ", duplicated " + list(duplicated) + ", out of range " +
                      list(out_of_range));
}

Tensor stack_bands(const Tensor& image, const std::vector<std::size_t>& bands) {
    const std::size_t plane = image.dim(1) * image.dim(2);
    Tensor out(Shape{bands.size(), image.dim(1), image.dim(2)});
    for (std::size_t i = 0; i < bands.size(); ++i)
        std::copy_n(image.data().data() + bands[i] * plane, plane, out.data().data() + i * plane);
    return out;
}

Tensor unstack_bands(const std::vector<Tensor>& groups, const std::vector<BandGroup>& spec, std::size_t bands) {
    const std::size_t H = groups.front().dim(1), W = groups.front().dim(2), plane = H * W;
    Tensor out(Shape{bands, H, W});
    for (std::size_t g = 0; g < spec.size(); ++g) {
        if (groups[g].dim(0) != spec[g].bands.size()) {
            throw DimensionError("group '" + spec[g].name + "' tensor has " + std::to_string(groups[g].dim(0)) +
                                 " channels, map lists " + std::to_string(spec[g].bands.size()));
        }
        for (std::size_t i = 0; i < spec[g].bands.size(); ++i)
            std::copy_n(groups[g].data().data() + i * plane, plane, out.data().data() + spec[g].bands[i] * plane);
    }
    return out;
}

}  // namespace

void BandGroupMap::validate() const {
    check_partition(sar_groups, kSarBands, "SAR");
    check_partition(msi_groups, kMsiBands, "MSI");
}

GroupedPair apply_band_grouping(const PatchPair& patch, const BandGroupMap& map) {
    map.validate();
    GroupedPair out;
    for (const auto& g : map.sar_groups) out.sar.push_back(stack_bands(patch.sar, g.bands));
    for (const auto& g : map.msi_groups) out.msi.push_back(stack_bands(patch.msi, g.bands));
    return out;
}

PatchPair reconstruct_from_groups(const GroupedPair& grouped, const BandGroupMap& map, std::uint16_t label) {
    map.validate();
    if (grouped.sar.size() != map.sar_groups.size() || grouped.msi.size() != map.msi_groups.size()) {
        throw DimensionError("grouped pair does not match the band group map");
    }
    PatchPair out;
    out.sar = unstack_bands(grouped.sar, map.sar_groups, kSarBands);
    out.msi = unstack_bands(grouped.msi, map.msi_groups, kMsiBands);
    out.label = label;
    return out;
}

// ---------------------------------------------------------------------------
// labels

const std::vector<std::string>& original_class_names() {
    static const std::vector<std::string> names{"1", "2", "3", "4", "5", "6", "7", "8", "9",
                                                "10", "A", "B", "C", "D", "E", "F", "G"};
    return names;
}

const std::vector<std::string>& merged_class_names() {
    static const std::vector<std::string> names{"Compact built types", "Open built types", "Low-rise built types",
                                                "Heavy industry",      "Dense vegetation", "Low vegetation",
                                                "Bare surfaces",       "Water"};
    return names;
}

LabelSpace::LabelSpace(LabelMode mode) : mode_(mode) {
    if (mode == LabelMode::original17) {
        for (std::size_t i = 0; i < kOriginalClasses; ++i) merge_map_[i] = static_cast<std::uint8_t>(i);
    } else {
        // 1-3, 4-6, 7-9, 10, A-B, C-D, E-F, G
        merge_map_ = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 4, 4, 5, 5, 6, 6, 7};
    }
}

LabelSpace LabelSpace::original() { return LabelSpace(LabelMode::original17); }
LabelSpace LabelSpace::merged() { return LabelSpace(LabelMode::merged8); }

std::size_t LabelSpace::map(std::size_t original_label) const {
    if (original_label >= kOriginalClasses) {
        throw DataError("label " + std::to_string(original_label) + " outside 0..16");
    }
    return merge_map_[original_label];
}

const std::vector<std::string>& LabelSpace::class_names() const {
    return mode_ == LabelMode::merged8 ? merged_class_names() : original_class_names();
}

std::vector<std::size_t> LabelSpace::built_up_classes() const {
    if (mode_ == LabelMode::merged8) return {0, 1, 2, 3};
    return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
}

std::vector<std::size_t> LabelSpace::natural_classes() const {
    if (mode_ == LabelMode::merged8) return {4, 5, 6, 7};
    return {10, 11, 12, 13, 14, 15, 16};
}

std::string LabelSpace::mode_name() const { return mode_ == LabelMode::merged8 ? "merged8" : "original17"; }

LabelSpace LabelSpace::from_name(const std::string& name) {
    if (name == "original17") return original();
    if (name == "merged8") return merged();
    throw ConfigError("unknown label mode '" + name + "' (expected original17 or merged8)");
}

std::size_t merge_label(std::size_t label, const LabelSpace& space) { return space.map(label); }

}  // namespace lcz
