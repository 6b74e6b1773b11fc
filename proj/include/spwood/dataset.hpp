#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spwood/geometry.hpp"

namespace spwood {

/// One line of a DOTA label file.
struct AnnotationRecord {
    std::string image_id;
    std::array<Vec2, 4> corners;
    std::string category;
    int difficulty = 0;
    /// Position among the records of its image, in file order. Sparsified
    /// sets keep the ordinal of the record they were drawn from.
    std::size_t ordinal = 0;

    bool operator==(const AnnotationRecord&) const = default;
};

struct ImageAnnotations {
    std::string image_id;
    /// Metadata lines (imagesource:, gsd:, ...) written back verbatim.
    std::vector<std::string> header_lines;
    std::vector<AnnotationRecord> records;
};

struct AnnotationSet {
    std::map<std::string, ImageAnnotations> images;

    std::size_t record_count() const;
    std::vector<std::string> image_ids() const;
    /// Instances per category over the whole set.
    std::map<std::string, std::size_t> category_counts() const;
};

/// Parses one label file. Lines whose first token is not a number are
/// metadata; blank lines are skipped. Data lines hold 8 coordinates, a
/// category and an optional integer difficulty.
ImageAnnotations parse_dota(const std::string& body, const std::string& image_id = "");

std::string serialize_dota(const ImageAnnotations& image);

/// Reads every *.txt file in `dir`; the file stem is the image id.
AnnotationSet load_dota_dir(const std::filesystem::path& dir);

/// Writes `<image_id>.txt` per image, creating `dir` if needed.
void write_dota_dir(const AnnotationSet& set, const std::filesystem::path& dir);

enum class WeakKind { RBox, HBox, Point };

WeakKind parse_weak_kind(const std::string& text);

struct WeakLabel {
    std::variant<OrientedBox, HorizontalBox, Vec2> shape;
    std::string category;
};

/// Oriented box recovered from (near-)rectangular corners: center at the
/// corner centroid, sides as mean opposite-edge lengths, long side as w,
/// theta from the long edge direction.
OrientedBox rbox_from_corners(const std::array<Vec2, 4>& corners);

/// Throws DegenerateInput on a zero-area quadrilateral.
WeakLabel weaken(const AnnotationRecord& record, WeakKind target);

/// "x y category", "xmin ymin xmax ymax category" or
/// "cx cy w h theta category".
std::string format_weak(const WeakLabel& label);

/// Round half up, with a 1e-9 guard against products such as 0.3 * 5 that
/// land just below the half.
std::size_t round_half_up(double x);

struct PartialSplit {
    std::vector<std::string> labeled;
    std::vector<std::string> unlabeled;
};

/// Picks round_half_up(ratio * #images) images uniformly without
/// replacement: the sorted ids are shuffled with Rng(seed) and the prefix
/// is labeled. Both lists are returned sorted.
PartialSplit select_partial(const AnnotationSet& set, double partial_ratio, std::uint64_t seed);

/// Restricts a set to the given image ids.
AnnotationSet subset_images(const AnnotationSet& set, const std::vector<std::string>& ids);

/// Per image and category keeps max(1, round_half_up(ratio * n)) records.
AnnotationSet sparsify_single(const AnnotationSet& labeled, double sparse_ratio,
                              std::uint64_t seed);

/// Per category over the whole set keeps round_half_up(ratio * n) records.
AnnotationSet sparsify_overall(const AnnotationSet& labeled, double sparse_ratio,
                               std::uint64_t seed);

enum class SparseMethod { Single, Overall };

SparseMethod parse_sparse_method(const std::string& text);

struct SparsifyConfig {
    SparseMethod method = SparseMethod::Single;
    double partial_ratio = 1.0;
    double sparse_ratio = 1.0;
    std::uint64_t seed = 0;
};

struct SparsifyResult {
    PartialSplit split;
    AnnotationSet sparse;
};

/// select_partial followed by the chosen sparsifier, both drawing from one
/// generator seeded with config.seed.
SparsifyResult sparsify(const AnnotationSet& set, const SparsifyConfig& config);

/// (count_single - count_overall) / count_overall * 100; empty when
/// count_overall is zero.
std::optional<double> relative_difference_percent(std::size_t count_single,
                                                  std::size_t count_overall);

struct CategoryStatsRow {
    std::string category;
    std::size_t count_single = 0;
    std::size_t count_overall = 0;
    std::optional<double> relative_difference_percent;
};

struct CategoryStats {
    std::vector<CategoryStatsRow> rows;

    const CategoryStatsRow* find(const std::string& category) const;
};

/// Categories appear in DOTA-v1.0 order (PL, BD, BR, GTF, SV, LV, SH, TC,
/// BC, ST, SBF, RA, HA, SP, HC; full names or abbreviations), then any
/// others alphabetically.
CategoryStats compare_stats(const AnnotationSet& single, const AnnotationSet& overall);

std::string stats_csv(const CategoryStats& stats);

/// Per-category retention of `kept` relative to `source`, as CSV with
/// columns category,count_input,count_kept,retained_percent.
std::string retention_csv(const AnnotationSet& source, const AnnotationSet& kept);

}  // namespace spwood
