#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lczlab/tensor.hpp"

namespace lcz {

inline constexpr std::size_t kPatchSize = 32;
inline constexpr std::size_t kSarBands = 8;
inline constexpr std::size_t kMsiBands = 10;
inline constexpr std::size_t kOriginalClasses = 17;
inline constexpr std::size_t kMergedClasses = 8;

/// One co-registered SAR/MSI scene: sar [8,32,32], msi [10,32,32].
struct PatchPair {
    Tensor sar;
    Tensor msi;
    std::uint16_t label = 0;
};

/// Throws DataError unless extents, band counts and label range are valid.
void validate_patch(const PatchPair& patch);

// ---------------------------------------------------------------------------
// spectral band grouping

struct BandGroup {
    std::string name;
    std::vector<std::size_t> bands;
};

/// Assignment of raw band indices to named groups, per modality. MSI band
/// indices follow the storage order B2,B3,B4,B5,B6,B7,B8,B8a,B11,B12.
struct BandGroupMap {
    std::vector<BandGroup> sar_groups;
    std::vector<BandGroup> msi_groups;

    /// VH={0,1,4}, VV={2,3,5}, CMOE={6,7}; RGB={B2,B3,B4}, VRE={B5,B6,B7,B8a},
    /// SWIR={B11,B12}, NIR={B8}.
    static BandGroupMap standard();
    /// Every band in its own group.
    static BandGroupMap singletons();

    /// Throws ConfigError listing missing or duplicated bands unless each
    /// modality's groups partition its band set.
    void validate() const;
};

struct GroupedPair {
    std::vector<Tensor> sar;
    std::vector<Tensor> msi;
};

GroupedPair apply_band_grouping(const PatchPair& patch, const BandGroupMap& map);
/// Inverse of apply_band_grouping.
PatchPair reconstruct_from_groups(const GroupedPair& grouped, const BandGroupMap& map, std::uint16_t label);

// ---------------------------------------------------------------------------
// label space

enum class LabelMode { original17, merged8 };

/// Class index convention: LCZ 1-10 are indices 0-9 (built-up), LCZ A-G are
/// indices 10-16 (natural).
class LabelSpace {
public:
    static LabelSpace original();
    static LabelSpace merged();

    LabelMode mode() const noexcept { return mode_; }
    std::size_t num_classes() const noexcept { return mode_ == LabelMode::merged8 ? kMergedClasses : kOriginalClasses; }
    /// Maps an original label (0..16) into this space. Throws DataError if out of range.
    std::size_t map(std::size_t original_label) const;
    const std::array<std::uint8_t, kOriginalClasses>& merge_map() const noexcept { return merge_map_; }
    const std::vector<std::string>& class_names() const;
    /// Built-up (LCZ 1-10) and natural (LCZ A-G) classes expressed in this space.
    std::vector<std::size_t> built_up_classes() const;
    std::vector<std::size_t> natural_classes() const;
    std::string mode_name() const;
    static LabelSpace from_name(const std::string& name);

private:
    explicit LabelSpace(LabelMode mode);
    LabelMode mode_;
    std::array<std::uint8_t, kOriginalClasses> merge_map_{};
};

std::size_t merge_label(std::size_t label, const LabelSpace& space);

const std::vector<std::string>& original_class_names();
const std::vector<std::string>& merged_class_names();

}  // namespace lcz
