#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace lcz::cli {

inline constexpr std::uint8_t kGridSentinel = 255;

/// Row-major label map of the first width*height patches. Cells past the end
/// of the split hold kGridSentinel.
struct GridReport {
    std::size_t width = 20;
    std::size_t height = 20;
    std::vector<std::uint8_t> cells;

    static GridReport from_labels(std::span<const std::size_t> labels, std::size_t width, std::size_t height);

    std::uint8_t at(std::size_t row, std::size_t col) const { return cells[row * width + col]; }
    /// One comma-separated line per grid row.
    void write_csv(std::ostream& os) const;
    /// Binary graymap, gray level = class index.
    void write_pgm(std::ostream& os) const;
};

struct AblationRow {
    std::string variant;  // tag, e.g. "FM1_B"
    std::string dataset_sha256;
    std::optional<std::string> error;
    double oa = 0;
    std::optional<double> oa_built_up;
    std::optional<double> oa_natural;
    double kappa = 0;
    double mcc = 0;
};

/// OA descending, ties by variant name; failed rows last, by name.
void sort_ablation_rows(std::vector<AblationRow>& rows);

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows);
/// Fixed-width table for the terminal.
void print_ablation_table(std::ostream& os, std::span<const AblationRow> rows);

void write_text_file(const std::filesystem::path& file, const std::string& contents);

}  // namespace lcz::cli
