#include "spwood/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

#include "spwood/errors.hpp"

namespace spwood {

namespace {

void check_extent(int width, int height) {
    if (width <= 0 || height <= 0) throw InvalidInput("raster extent must be positive");
}

}  // namespace

void validate(const RasterImage& image) {
    check_extent(image.width, image.height);
    if (image.intensity.size() != static_cast<std::size_t>(image.width) * image.height) {
        throw InvalidInput("raster intensity length does not match width x height");
    }
    for (double v : image.intensity) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("raster intensity outside [0,1]");
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(data.begin(), data.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

std::pair<int, int> seed_pixel(const PointAnnotation& seed, int width, int height) {
    if (!std::isfinite(seed.x) || !std::isfinite(seed.y) || seed.x < 0.0 || seed.y < 0.0 ||
        seed.x >= width || seed.y >= height) {
        throw InvalidInput("seed outside the raster");
    }
    return {static_cast<int>(std::floor(seed.x)), static_cast<int>(std::floor(seed.y))};
}

VoronoiLabelMap voronoi_partition(std::span<const PointAnnotation> seeds, int width, int height) {
    check_extent(width, height);
    if (seeds.empty()) throw InvalidInput("voronoi_partition needs at least one seed");

    std::vector<std::pair<int, int>> pix;
    pix.reserve(seeds.size());
    std::set<std::pair<int, int>> occupied;
    for (const auto& s : seeds) {
        pix.push_back(seed_pixel(s, width, height));
        if (!occupied.insert(pix.back()).second) {
            throw InvalidInput("two seeds share one pixel");
        }
    }

    // Seeds are bucketed on a coarse grid; each pixel searches rings of
    // buckets outward until no unvisited bucket can hold a seed at least as
    // close as the best one found. Squared distances are integers, so ties
    // are exact.
    const double area_per_seed =
        static_cast<double>(width) * height / static_cast<double>(seeds.size());
    const int bucket = std::max(1, static_cast<int>(std::sqrt(area_per_seed)));
    const int bw = (width + bucket - 1) / bucket;
    const int bh = (height + bucket - 1) / bucket;
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(bw) * bh);
    for (std::size_t k = 0; k < pix.size(); ++k) {
        const auto [x, y] = pix[k];
        buckets[static_cast<std::size_t>(y / bucket) * bw + x / bucket].push_back(
            static_cast<int>(k));
    }

    VoronoiLabelMap out;
    out.width = width;
    out.height = height;
    out.seeds.assign(seeds.begin(), seeds.end());
    out.cell_id.assign(static_cast<std::size_t>(width) * height, -1);

    const int max_ring = std::max(bw, bh);
    for (int y = 0; y < height; ++y) {
        const int by = y / bucket;
        for (int x = 0; x < width; ++x) {
            const int bx = x / bucket;
            long long best_d2 = std::numeric_limits<long long>::max();
            int best = -1;
            auto visit = [&](int cx, int cy) {
                if (cx < 0 || cy < 0 || cx >= bw || cy >= bh) return;
                for (int k : buckets[static_cast<std::size_t>(cy) * bw + cx]) {
                    const long long dx = pix[k].first - x;
                    const long long dy = pix[k].second - y;
                    const long long d2 = dx * dx + dy * dy;
                    if (d2 < best_d2 || (d2 == best_d2 && k < best)) {
                        best_d2 = d2;
                        best = k;
                    }
                }
            };
            for (int ring = 0; ring <= max_ring; ++ring) {
                if (best >= 0 && ring >= 1) {
                    const long long gap = static_cast<long long>(ring - 1) * bucket + 1;
                    if (gap * gap > best_d2) break;
                }
                if (ring == 0) {
                    visit(bx, by);
                    continue;
                }
                for (int d = -ring; d <= ring; ++d) {
                    visit(bx + d, by - ring);
                    visit(bx + d, by + ring);
                }
                for (int d = -ring + 1; d <= ring - 1; ++d) {
                    visit(bx - ring, by + d);
                    visit(bx + ring, by + d);
                }
            }
            out.cell_id[static_cast<std::size_t>(y) * width + x] = best;
        }
    }
    return out;
}

std::vector<double> gradient_magnitude(const RasterImage& image) {
    validate(image);
    const int w = image.width;
    const int h = image.height;
    std::vector<double> g(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = 0.5 * (image.at(std::min(x + 1, w - 1), y) -
                                     image.at(std::max(x - 1, 0), y));
            const double gy = 0.5 * (image.at(x, std::min(y + 1, h - 1)) -
                                     image.at(x, std::max(y - 1, 0)));
            g[static_cast<std::size_t>(y) * w + x] = std::hypot(gx, gy);
        }
    }
    return g;
}

namespace {

enum Label : std::uint8_t { kUnlabeled = 0, kForeground = 1, kBackground = 2 };

struct FloodEntry {
    double level;
    std::uint8_t label;
    std::size_t index;

    bool operator>(const FloodEntry& o) const {
        return std::tie(level, label, index) > std::tie(o.level, o.label, o.index);
    }
};

BinaryMask flood_cell(const VoronoiLabelMap& cells, const std::vector<double>& grad, int cell,
                      const std::vector<std::size_t>& members) {
    const int w = cells.width;
    const int h = cells.height;
    const auto [sx, sy] = seed_pixel(cells.seeds[static_cast<std::size_t>(cell)], w, h);
    const std::size_t seed_index = static_cast<std::size_t>(sy) * w + sx;

    BinaryMask mask{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    std::vector<std::uint8_t>& label = mask.data;

    auto in_cell = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < w && y < h && cells.at(x, y) == cell;
    };

    std::priority_queue<FloodEntry, std::vector<FloodEntry>, std::greater<>> queue;
    label[seed_index] = kForeground;
    queue.push({grad[seed_index], kForeground, seed_index});
    for (std::size_t idx : members) {
        if (idx == seed_index) continue;
        const int x = static_cast<int>(idx % w);
        const int y = static_cast<int>(idx / w);
        if (!in_cell(x - 1, y) || !in_cell(x + 1, y) || !in_cell(x, y - 1) || !in_cell(x, y + 1)) {
            label[idx] = kBackground;
            queue.push({grad[idx], kBackground, idx});
        }
    }

    constexpr int kDx[4] = {0, -1, 1, 0};
    constexpr int kDy[4] = {-1, 0, 0, 1};
    while (!queue.empty()) {
        const FloodEntry top = queue.top();
        queue.pop();
        const int x = static_cast<int>(top.index % w);
        const int y = static_cast<int>(top.index / w);
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k];
            const int ny = y + kDy[k];
            if (!in_cell(nx, ny)) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (label[n] != kUnlabeled) continue;
            label[n] = top.label;
            queue.push({std::max(top.level, grad[n]), top.label, n});
        }
    }

    for (auto& v : label) v = v == kForeground ? 1 : 0;
    return mask;
}

}  // namespace

std::vector<BinaryMask> watershed_segment(const RasterImage& image, const VoronoiLabelMap& cells) {
    validate(image);
    if (image.width != cells.width || image.height != cells.height ||
        cells.cell_id.size() != image.intensity.size()) {
        throw InvalidInput("watershed_segment: image and Voronoi map dimensions differ");
    }
    const auto grad = gradient_magnitude(image);

    std::vector<std::vector<std::size_t>> members(cells.seeds.size());
    for (std::size_t i = 0; i < cells.cell_id.size(); ++i) {
        const int id = cells.cell_id[i];
        if (id < 0 || static_cast<std::size_t>(id) >= cells.seeds.size()) {
            throw InvalidInput("watershed_segment: cell id out of range");
        }
        members[static_cast<std::size_t>(id)].push_back(i);
    }

    std::vector<BinaryMask> masks;
    masks.reserve(cells.seeds.size());
    for (std::size_t k = 0; k < cells.seeds.size(); ++k) {
        masks.push_back(flood_cell(cells, grad, static_cast<int>(k), members[k]));
    }
    return masks;
}

ScaleTarget scale_target_from_mask(const BinaryMask& mask, double theta) {
    double sum_x = 0.0;
    double sum_y = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            sum_x += x + 0.5;
            sum_y += y + 0.5;
            ++n;
        }
    }
    if (n == 0) return {};
    const double mx = sum_x / static_cast<double>(n);
    const double my = sum_y / static_cast<double>(n);
    const double c = std::cos(theta);
    const double s = std::sin(theta);

    double u_min = std::numeric_limits<double>::infinity();
    double u_max = -u_min;
    double v_min = u_min;
    double v_max = -u_min;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            const double dx = x + 0.5 - mx;
            const double dy = y + 0.5 - my;
            // rotation by -theta
            const double u = c * dx + s * dy;
            const double v = -s * dx + c * dy;
            u_min = std::min(u_min, u);
            u_max = std::max(u_max, u);
            v_min = std::min(v_min, v);
            v_max = std::max(v_max, v);
        }
    }
    return {u_max - u_min + 1.0, v_max - v_min + 1.0, true};
}

std::vector<ScaleTarget> scale_targets(const RasterImage& image,
                                       std::span<const PointAnnotation> seeds,
                                       std::span<const double> thetas) {
    if (seeds.size() != thetas.size()) {
        throw InvalidInput("scale_targets: one angle per seed required");
    }
    const auto cells = voronoi_partition(seeds, image.width, image.height);
    const auto masks = watershed_segment(image, cells);
    std::vector<ScaleTarget> out;
    out.reserve(masks.size());
    for (std::size_t k = 0; k < masks.size(); ++k) {
        out.push_back(scale_target_from_mask(masks[k], thetas[k]));
    }
    return out;
}

RasterImage parse_pgm(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            const char ch = bytes[pos];
            if (ch == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    auto next_int = [&](const char* what) {
        const std::string tok = next_token();
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw InvalidInput(std::string("pgm: bad ") + what + " '" + tok + "'");
        }
    };

    if (next_token() != "P5") throw InvalidInput("pgm: expected P5 magic");
    RasterImage image;
    image.width = next_int("width");
    image.height = next_int("height");
    const int maxval = next_int("maxval");
    if (image.width <= 0 || image.height <= 0) throw InvalidInput("pgm: nonpositive extent");
    if (maxval <= 0 || maxval > 255) throw InvalidInput("pgm: only 8-bit maxval supported");
    ++pos;  // single whitespace byte before the raster

    const std::size_t n = static_cast<std::size_t>(image.width) * image.height;
    if (bytes.size() < pos + n) throw InvalidInput("pgm: truncated raster");
    image.intensity.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<unsigned char>(bytes[pos + i]);
        image.intensity[i] = std::min(1.0, static_cast<double>(v) / maxval);
    }
    return image;
}

RasterImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_pgm(buf.str());
}

std::string encode_pgm(const BinaryMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) +
                      "\n255\n";
    out.reserve(out.size() + mask.data.size());
    for (auto v : mask.data) out.push_back(static_cast<char>(v ? 255 : 0));
    return out;
}

void write_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    const auto bytes = encode_pgm(mask);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace spwood
