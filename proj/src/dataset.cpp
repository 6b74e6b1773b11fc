#include "spwood/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "spwood/errors.hpp"
#include "spwood/rng.hpp"
#include "spwood/text.hpp"

namespace spwood {

namespace {

constexpr std::array<std::pair<const char*, const char*>, 15> kDotaCategories{{
    {"PL", "plane"},
    {"BD", "baseball-diamond"},
    {"BR", "bridge"},
    {"GTF", "ground-track-field"},
    {"SV", "small-vehicle"},
    {"LV", "large-vehicle"},
    {"SH", "ship"},
    {"TC", "tennis-court"},
    {"BC", "basketball-court"},
    {"ST", "storage-tank"},
    {"SBF", "soccer-ball-field"},
    {"RA", "roundabout"},
    {"HA", "harbor"},
    {"SP", "swimming-pool"},
    {"HC", "helicopter"},
}};

std::size_t dota_rank(const std::string& category) {
    for (std::size_t i = 0; i < kDotaCategories.size(); ++i) {
        if (category == kDotaCategories[i].first || category == kDotaCategories[i].second) {
            return i;
        }
    }
    return kDotaCategories.size();
}

void check_ratio(double ratio, const char* what) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw InvalidInput(std::string(what) + " must lie in (0,1]");
    }
}

double shoelace_area(const std::array<Vec2, 4>& c) {
    double twice = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const Vec2& a = c[i];
        const Vec2& b = c[(i + 1) % 4];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * std::abs(twice);
}

// Chooses k of the given items uniformly; returns them in input order.
std::vector<std::size_t> choose(std::vector<std::size_t> items, std::size_t k, Rng& rng) {
    rng.shuffle(std::span<std::size_t>(items));
    items.resize(std::min(k, items.size()));
    std::sort(items.begin(), items.end());
    return items;
}

PartialSplit select_partial_with(const AnnotationSet& set, double partial_ratio, Rng& rng) {
    check_ratio(partial_ratio, "partial ratio");
    if (set.images.empty()) throw InvalidInput("select_partial: empty annotation set");
    auto ids = set.image_ids();
    const std::size_t k = std::min(ids.size(), round_half_up(partial_ratio * ids.size()));
    rng.shuffle(std::span<std::string>(ids));
    PartialSplit split;
    split.labeled.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
    split.unlabeled.assign(ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end());
    std::sort(split.labeled.begin(), split.labeled.end());
    std::sort(split.unlabeled.begin(), split.unlabeled.end());
    return split;
}

AnnotationSet sparsify_single_with(const AnnotationSet& labeled, double sparse_ratio, Rng& rng) {
    check_ratio(sparse_ratio, "sparse ratio");
    AnnotationSet out;
    for (const auto& [id, image] : labeled.images) {
        std::map<std::string, std::vector<std::size_t>> by_category;
        for (std::size_t i = 0; i < image.records.size(); ++i) {
            by_category[image.records[i].category].push_back(i);
        }
        std::vector<std::size_t> keep;
        for (auto& [category, members] : by_category) {
            const std::size_t k =
                std::max<std::size_t>(1, round_half_up(sparse_ratio * members.size()));
            const auto chosen = choose(members, k, rng);
            keep.insert(keep.end(), chosen.begin(), chosen.end());
        }
        std::sort(keep.begin(), keep.end());
        ImageAnnotations kept{image.image_id, image.header_lines, {}};
        for (std::size_t i : keep) kept.records.push_back(image.records[i]);
        out.images.emplace(id, std::move(kept));
    }
    return out;
}

AnnotationSet sparsify_overall_with(const AnnotationSet& labeled, double sparse_ratio, Rng& rng) {
    check_ratio(sparse_ratio, "sparse ratio");
    // Flat index over the set in (image id, ordinal) order.
    std::vector<const AnnotationRecord*> flat;
    std::map<std::string, std::vector<std::size_t>> by_category;
    for (const auto& [id, image] : labeled.images) {
        for (const auto& record : image.records) {
            by_category[record.category].push_back(flat.size());
            flat.push_back(&record);
        }
    }
    std::vector<bool> keep(flat.size(), false);
    for (auto& [category, members] : by_category) {
        const std::size_t k = round_half_up(sparse_ratio * members.size());
        for (std::size_t i : choose(members, k, rng)) keep[i] = true;
    }

    AnnotationSet out;
    std::size_t cursor = 0;
    for (const auto& [id, image] : labeled.images) {
        ImageAnnotations kept{image.image_id, image.header_lines, {}};
        for (const auto& record : image.records) {
            if (keep[cursor++]) kept.records.push_back(record);
        }
        out.images.emplace(id, std::move(kept));
    }
    return out;
}

std::string format_percent(const std::optional<double>& v) {
    if (!v) return "undefined";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return buf;
}

}  // namespace

std::size_t AnnotationSet::record_count() const {
    std::size_t n = 0;
    for (const auto& [id, image] : images) n += image.records.size();
    return n;
}

std::vector<std::string> AnnotationSet::image_ids() const {
    std::vector<std::string> ids;
    ids.reserve(images.size());
    for (const auto& [id, image] : images) ids.push_back(id);
    return ids;
}

std::map<std::string, std::size_t> AnnotationSet::category_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& [id, image] : images) {
        for (const auto& r : image.records) ++counts[r.category];
    }
    return counts;
}

ImageAnnotations parse_dota(const std::string& body, const std::string& image_id) {
    ImageAnnotations image;
    image.image_id = image_id;
    std::size_t line_no = 0;
    for (auto line : text::lines(body)) {
        ++line_no;
        const auto tokens = text::split_whitespace(line);
        if (tokens.empty()) continue;
        double probe = 0.0;
        if (!text::parse_double(tokens[0], probe)) {
            image.header_lines.emplace_back(text::trim(line));
            continue;
        }

        std::size_t n_coords = 0;
        while (n_coords < tokens.size() && text::parse_double(tokens[n_coords], probe)) ++n_coords;
        if (n_coords != 8) {
            throw ParseError(line_no, "expected 8 coordinates, found " + std::to_string(n_coords));
        }
        if (tokens.size() < 9) throw ParseError(line_no, "missing category");
        if (tokens.size() > 10) throw ParseError(line_no, "trailing tokens after difficulty");

        AnnotationRecord record;
        record.image_id = image_id;
        for (std::size_t k = 0; k < 4; ++k) {
            double x = 0.0;
            double y = 0.0;
            text::parse_double(tokens[2 * k], x);
            text::parse_double(tokens[2 * k + 1], y);
            if (!std::isfinite(x) || !std::isfinite(y)) {
                throw ParseError(line_no, "non-finite coordinate");
            }
            record.corners[k] = Vec2(x, y);
        }
        record.category = std::string(tokens[8]);
        if (tokens.size() == 10) {
            long long difficulty = 0;
            if (!text::parse_int(tokens[9], difficulty)) {
                throw ParseError(line_no, "difficulty must be an integer");
            }
            record.difficulty = static_cast<int>(difficulty);
        }
        record.ordinal = image.records.size();
        image.records.push_back(std::move(record));
    }
    return image;
}

std::string serialize_dota(const ImageAnnotations& image) {
    std::string out;
    for (const auto& h : image.header_lines) out += h + "\n";
    for (const auto& r : image.records) {
        for (const auto& c : r.corners) {
            out += text::format_double(c.x()) + " " + text::format_double(c.y()) + " ";
        }
        out += r.category + " " + std::to_string(r.difficulty) + "\n";
    }
    return out;
}

AnnotationSet load_dota_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw InvalidInput("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    AnnotationSet set;
    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) throw InvalidInput("cannot read " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        const std::string id = path.stem().string();
        try {
            set.images.emplace(id, parse_dota(buf.str(), id));
        } catch (const ParseError& e) {
            throw ParseError(e.line(), path.filename().string() + ": " + e.what());
        }
    }
    return set;
}

void write_dota_dir(const AnnotationSet& set, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [id, image] : set.images) {
        const auto path = dir / (id + ".txt");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw InvalidInput("cannot write " + path.string());
        out << serialize_dota(image);
    }
}

WeakKind parse_weak_kind(const std::string& text) {
    if (text == "rbox") return WeakKind::RBox;
    if (text == "hbox") return WeakKind::HBox;
    if (text == "point") return WeakKind::Point;
    throw InvalidInput("unknown weak label kind '" + text + "'");
}

OrientedBox rbox_from_corners(const std::array<Vec2, 4>& c) {
    const Vec2 e0 = c[1] - c[0];
    const Vec2 e1 = c[2] - c[1];
    const Vec2 e2 = c[3] - c[2];
    const Vec2 e3 = c[0] - c[3];
    const double len_a = 0.5 * (e0.norm() + e2.norm());
    const double len_b = 0.5 * (e1.norm() + e3.norm());
    // Opposite edges run in opposite directions around the quadrilateral.
    const Vec2 dir_a = e0 - e2;
    const Vec2 dir_b = e1 - e3;

    OrientedBox box;
    const Vec2 center = 0.25 * (c[0] + c[1] + c[2] + c[3]);
    box.cx = center.x();
    box.cy = center.y();
    if (len_a >= len_b) {
        box.w = len_a;
        box.h = len_b;
        box.theta = normalize_angle(std::atan2(dir_a.y(), dir_a.x()));
    } else {
        box.w = len_b;
        box.h = len_a;
        box.theta = normalize_angle(std::atan2(dir_b.y(), dir_b.x()));
    }
    return box;
}

WeakLabel weaken(const AnnotationRecord& record, WeakKind target) {
    const auto& c = record.corners;
    double extent = 0.0;
    for (const auto& p : c) extent = std::max(extent, (p - c[0]).norm());
    if (shoelace_area(c) <= 1e-9 * std::max(1.0, extent * extent)) {
        throw DegenerateInput("annotation '" + record.category + "' in " + record.image_id +
                              " has zero area");
    }

    switch (target) {
        case WeakKind::RBox:
            return {rbox_from_corners(c), record.category};
        case WeakKind::HBox: {
            HorizontalBox hb{c[0].x(), c[0].y(), c[0].x(), c[0].y()};
            for (const auto& p : c) {
                hb.xmin = std::min(hb.xmin, p.x());
                hb.ymin = std::min(hb.ymin, p.y());
                hb.xmax = std::max(hb.xmax, p.x());
                hb.ymax = std::max(hb.ymax, p.y());
            }
            return {hb, record.category};
        }
        case WeakKind::Point:
            return {Vec2(0.25 * (c[0] + c[1] + c[2] + c[3])), record.category};
    }
    throw InvalidInput("unknown weak label kind");
}

std::string format_weak(const WeakLabel& label) {
    using text::format_double;
    if (const auto* p = std::get_if<Vec2>(&label.shape)) {
        return format_double(p->x()) + " " + format_double(p->y()) + " " + label.category;
    }
    if (const auto* hb = std::get_if<HorizontalBox>(&label.shape)) {
        return format_double(hb->xmin) + " " + format_double(hb->ymin) + " " +
               format_double(hb->xmax) + " " + format_double(hb->ymax) + " " + label.category;
    }
    const auto& b = std::get<OrientedBox>(label.shape);
    return format_double(b.cx) + " " + format_double(b.cy) + " " + format_double(b.w) + " " +
           format_double(b.h) + " " + format_double(b.theta) + " " + label.category;
}

std::size_t round_half_up(double x) {
    if (!(x >= 0.0)) return 0;
    return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

PartialSplit select_partial(const AnnotationSet& set, double partial_ratio, std::uint64_t seed) {
    Rng rng(seed);
    return select_partial_with(set, partial_ratio, rng);
}

AnnotationSet subset_images(const AnnotationSet& set, const std::vector<std::string>& ids) {
    AnnotationSet out;
    for (const auto& id : ids) {
        const auto it = set.images.find(id);
        if (it == set.images.end()) throw InvalidInput("unknown image id " + id);
        out.images.emplace(id, it->second);
    }
    return out;
}

AnnotationSet sparsify_single(const AnnotationSet& labeled, double sparse_ratio,
                              std::uint64_t seed) {
    Rng rng(seed);
    return sparsify_single_with(labeled, sparse_ratio, rng);
}

AnnotationSet sparsify_overall(const AnnotationSet& labeled, double sparse_ratio,
                               std::uint64_t seed) {
    Rng rng(seed);
    return sparsify_overall_with(labeled, sparse_ratio, rng);
}

SparseMethod parse_sparse_method(const std::string& text) {
    if (text == "single") return SparseMethod::Single;
    if (text == "overall") return SparseMethod::Overall;
    throw InvalidInput("unknown sparse method '" + text + "'");
}

SparsifyResult sparsify(const AnnotationSet& set, const SparsifyConfig& config) {
    check_ratio(config.sparse_ratio, "sparse ratio");
    Rng rng(config.seed);
    SparsifyResult result;
    result.split = select_partial_with(set, config.partial_ratio, rng);
    const auto labeled = subset_images(set, result.split.labeled);
    result.sparse = config.method == SparseMethod::Single
                        ? sparsify_single_with(labeled, config.sparse_ratio, rng)
                        : sparsify_overall_with(labeled, config.sparse_ratio, rng);
    return result;
}

std::optional<double> relative_difference_percent(std::size_t count_single,
                                                  std::size_t count_overall) {
    if (count_overall == 0) return std::nullopt;
    return (static_cast<double>(count_single) - static_cast<double>(count_overall)) /
           static_cast<double>(count_overall) * 100.0;
}

const CategoryStatsRow* CategoryStats::find(const std::string& category) const {
    for (const auto& row : rows) {
        if (row.category == category) return &row;
    }
    return nullptr;
}

CategoryStats compare_stats(const AnnotationSet& single, const AnnotationSet& overall) {
    const auto cs = single.category_counts();
    const auto co = overall.category_counts();
    std::set<std::string> names;
    for (const auto& [k, v] : cs) names.insert(k);
    for (const auto& [k, v] : co) names.insert(k);

    std::vector<std::string> ordered(names.begin(), names.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return dota_rank(a) < dota_rank(b);
    });

    CategoryStats stats;
    for (const auto& name : ordered) {
        CategoryStatsRow row;
        row.category = name;
        if (auto it = cs.find(name); it != cs.end()) row.count_single = it->second;
        if (auto it = co.find(name); it != co.end()) row.count_overall = it->second;
        row.relative_difference_percent =
            relative_difference_percent(row.count_single, row.count_overall);
        stats.rows.push_back(std::move(row));
    }
    return stats;
}

std::string stats_csv(const CategoryStats& stats) {
    std::string out = "category,count_single,count_overall,relative_difference_percent\n";
    for (const auto& row : stats.rows) {
        out += row.category + "," + std::to_string(row.count_single) + "," +
               std::to_string(row.count_overall) + "," +
               format_percent(row.relative_difference_percent) + "\n";
    }
    return out;
}

std::string retention_csv(const AnnotationSet& source, const AnnotationSet& kept) {
    const auto cs = source.category_counts();
    const auto ck = kept.category_counts();
    std::vector<std::string> ordered;
    for (const auto& [k, v] : cs) ordered.push_back(k);
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        return dota_rank(a) < dota_rank(b);
    });
    std::string out = "category,count_input,count_kept,retained_percent\n";
    for (const auto& name : ordered) {
        const std::size_t n = cs.at(name);
        const auto it = ck.find(name);
        const std::size_t k = it == ck.end() ? 0 : it->second;
        out += name + "," + std::to_string(n) + "," + std::to_string(k) + "," +
               format_percent(100.0 * static_cast<double>(k) / static_cast<double>(n)) + "\n";
    }
    return out;
}

}  // namespace spwood
