#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spwood/geometry.hpp"

namespace spwood {

/// Row-major grayscale raster with intensities in [0,1].
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<double> intensity;

    double at(int x, int y) const { return intensity[static_cast<std::size_t>(y) * width + x]; }
};

void validate(const RasterImage& image);

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    std::size_t count() const;
};

/// Pixel (x, y) covers [x, x+1) x [y, y+1); a seed belongs to the pixel
/// that contains it, and distances are measured between pixel centers.
struct VoronoiLabelMap {
    int width = 0;
    int height = 0;
    std::vector<int> cell_id;
    std::vector<PointAnnotation> seeds;

    int at(int x, int y) const { return cell_id[static_cast<std::size_t>(y) * width + x]; }
};

struct ScaleTarget {
    double w_t = 0.0;
    double h_t = 0.0;
    bool valid = false;
};

/// Pixel containing the seed; throws InvalidInput when outside the raster.
std::pair<int, int> seed_pixel(const PointAnnotation& seed, int width, int height);

/// Nearest-seed partition of the raster. Ties go to the lowest seed index.
/// Two seeds in the same pixel are rejected: each cell must own its seed.
VoronoiLabelMap voronoi_partition(std::span<const PointAnnotation> seeds, int width, int height);

/// Central-difference gradient magnitude with replicated edges.
std::vector<double> gradient_magnitude(const RasterImage& image);

/// Marker watershed inside every Voronoi cell. The seed pixel is the
/// foreground marker and the cell's boundary ring (pixels touching another
/// cell or the image border) is the background marker. Flooding is a
/// priority flood over the gradient magnitude; entries pop in order of
/// (level, foreground before background, row-major index), so plateaus are
/// claimed by the foreground first.
///
/// Returns one mask per seed, confined to its cell and containing the seed.
std::vector<BinaryMask> watershed_segment(const RasterImage& image, const VoronoiLabelMap& cells);

/// Extents of the mask in the frame rotated by theta about its centroid,
/// measured on pixel centers (max - min + 1). Empty mask gives valid = false.
ScaleTarget scale_target_from_mask(const BinaryMask& mask, double theta);

/// Voronoi partition, watershed and extent extraction in one call; thetas
/// holds the predicted angle for each seed.
std::vector<ScaleTarget> scale_targets(const RasterImage& image,
                                       std::span<const PointAnnotation> seeds,
                                       std::span<const double> thetas);

/// Binary P5 PGM with maxval <= 255; intensities scaled to [0,1].
RasterImage read_pgm(const std::filesystem::path& path);
RasterImage parse_pgm(const std::string& bytes);

/// Writes the mask as P5 with 0/255 values.
void write_pgm(const std::filesystem::path& path, const BinaryMask& mask);
std::string encode_pgm(const BinaryMask& mask);

}  // namespace spwood
