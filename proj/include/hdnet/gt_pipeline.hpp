#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hdnet/tensor.hpp"

namespace hdnet::gt {

// Head-center point labels for one image.
struct PointAnnotationSet {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<std::pair<double, double>> points;  // (x, y) pixel coordinates
};

struct DensityMap {
    Tensor values;               // rank-2 (H, W), persons per pixel
    int resolution_divisor = 1;  // 1 = full resolution, 4 = model resolution

    double count() const { return values.sum(); }
};

// Per-cell density level labels at model resolution; 0 = background.
struct LevelMaskGT {
    Tensor labels;  // rank-2 (H/4, W/4), integer-valued
};

struct GTConfig {
    double sigma = 15.0;
    int kernel_truncation_radius = 60;  // 4 sigma
    double background_epsilon = 1e-3;
    std::vector<double> level_thresholds;  // ascending, length n-1

    void validate(int num_levels) const;
};

// Each point splats a truncated discrete Gaussian renormalized to sum exactly
// one, so the map total equals the point count even at image borders.
DensityMap rasterize_density(const PointAnnotationSet& annotations, const GTConfig& config);

// Sum-pooling: total count is preserved.
DensityMap pool_to_model_resolution(const DensityMap& map, int divisor = 4);

// Bins pooled per-cell counts into background (< epsilon) and density levels
// 1..n via the config thresholds; boundary ties go to the higher level.
LevelMaskGT build_level_masks(const DensityMap& pooled, const GTConfig& config, int num_levels);

// Quantile thresholds (i/n for i = 1..n-1) over nonzero pooled cells of a
// dataset, used for `--thresholds auto`.
std::vector<double> quantile_thresholds(const std::vector<DensityMap>& pooled_maps,
                                        double background_epsilon, int num_levels);

struct ClusterSpec {
    double center_x = 0.0;
    double center_y = 0.0;
    double spread = 4.0;  // isotropic stddev in pixels
    int count = 0;
};

struct SyntheticScene {
    Tensor image;  // rank-2 (H, W), values in [0, 1]
    PointAnnotationSet annotations;
};

// Deterministic for a fixed seed. Persons render as small bright blobs over
// structured background clutter (gradients, bars, dim blob-free speckle).
SyntheticScene generate_synthetic_scene(uint64_t seed, int width, int height,
                                        const std::vector<ClusterSpec>& clusters);

// The standard desk-scale scene recipe: cluster layout and person count are
// derived from the seed, count uniform in [0, 60].
SyntheticScene standard_scene(uint64_t seed, int width, int height);

}  // namespace hdnet::gt
