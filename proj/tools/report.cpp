#include "report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lczlab/error.hpp"

namespace lcz::cli {

GridReport GridReport::from_labels(std::span<const std::size_t> labels, std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) throw ConfigError("grid extents must be positive");
    GridReport g;
    g.width = width;
    g.height = height;
    g.cells.assign(width * height, kGridSentinel);
    for (std::size_t i = 0; i < std::min(labels.size(), g.cells.size()); ++i) {
        if (labels[i] >= kGridSentinel) throw DataError("label " + std::to_string(labels[i]) + " does not fit a grid cell");
        g.cells[i] = static_cast<std::uint8_t>(labels[i]);
    }
    return g;
}

void GridReport::write_csv(std::ostream& os) const {
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) os << (c ? "," : "") << int(at(r, c));
        os << '\n';
    }
}

void GridReport::write_pgm(std::ostream& os) const {
    os << "P5\n" << width << ' ' << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(cells.data()), static_cast<std::streamsize>(cells.size()));
}

void sort_ablation_rows(std::vector<AblationRow>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
        if (a.error.has_value() != b.error.has_value()) return !a.error.has_value();
        if (!a.error && a.oa != b.oa) return a.oa > b.oa;
        return a.variant < b.variant;
    });
}

namespace {

std::string fixed(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

std::string fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string(); }

}  // namespace

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
    os << "variant,oa,oa_built_up,oa_natural,kappa,mcc,dataset_sha256,status\n";
    for (const auto& r : rows) {
        os << r.variant << ',';
        if (r.error) {
            std::string msg = *r.error;
            std::replace(msg.begin(), msg.end(), '"', '\'');
            os << ",,,,," << r.dataset_sha256 << ",\"error: " << msg << "\"\n";
        } else {
            os << fixed(r.oa) << ',' << fixed(r.oa_built_up) << ',' << fixed(r.oa_natural) << ',' << fixed(r.kappa)
               << ',' << fixed(r.mcc) << ',' << r.dataset_sha256 << ",ok\n";
        }
    }
}

void print_ablation_table(std::ostream& os, std::span<const AblationRow> rows) {
    auto cell = [&](const std::string& s, int w) { os << std::left << std::setw(w) << s; };
    cell("Variant", 12), cell("OA", 9), cell("OA_bu", 9), cell("OA_n", 9), cell("kappa", 9), cell("MCC", 9);
    os << "dataset\n";
    for (const auto& r : rows) {
        cell(r.variant, 12);
        if (r.error) {
            os << "error: " << *r.error << '\n';
            continue;
        }
        cell(fixed(r.oa), 9), cell(r.oa_built_up ? fixed(*r.oa_built_up) : "-", 9);
        cell(r.oa_natural ? fixed(*r.oa_natural) : "-", 9), cell(fixed(r.kappa), 9), cell(fixed(r.mcc), 9);
        os << r.dataset_sha256.substr(0, 12) << '\n';
    }
}

void write_text_file(const std::filesystem::path& file, const std::string& contents) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw IoError("cannot write " + file.string());
    os << contents;
    if (!os) throw IoError("failed writing " + file.string());
}

}  // namespace lcz::cli
