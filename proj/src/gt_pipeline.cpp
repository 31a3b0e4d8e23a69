#include "hdnet/gt_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hdnet/errors.hpp"

namespace hdnet::gt {

void GTConfig::validate(int num_levels) const {
    if (sigma <= 0.0) throw ConfigError("gt: sigma must be positive");
    if (background_epsilon < 0.0) throw ConfigError("gt: background_epsilon must be >= 0");
    if (kernel_truncation_radius < 1)
        throw ConfigError("gt: kernel_truncation_radius must be >= 1");
    if (static_cast<int>(level_thresholds.size()) != num_levels - 1)
        throw ConfigError("gt: level_thresholds must have length n-1");
    for (size_t i = 1; i < level_thresholds.size(); ++i)
        if (level_thresholds[i] <= level_thresholds[i - 1])
            throw ConfigError("gt: level_thresholds must be strictly ascending");
}

DensityMap rasterize_density(const PointAnnotationSet& ann, const GTConfig& config) {
    if (config.sigma <= 0.0) throw ConfigError("rasterize_density: sigma must be positive");
    DensityMap out;
    out.resolution_divisor = 1;
    out.values = Tensor({ann.height, ann.width});

    const int R = config.kernel_truncation_radius;
    const double inv_two_sigma2 = 1.0 / (2.0 * config.sigma * config.sigma);

    for (size_t idx = 0; idx < ann.points.size(); ++idx) {
        const auto [px, py] = ann.points[idx];
        if (px < 0.0 || px >= ann.width || py < 0.0 || py >= ann.height)
            throw ValidationError("rasterize_density: point " + std::to_string(idx) +
                                  " outside image bounds");
        const int cx = static_cast<int>(std::lround(px));
        const int cy = static_cast<int>(std::lround(py));
        const int x0 = std::max(0, cx - R), x1 = std::min(ann.width - 1, cx + R);
        const int y0 = std::max(0, cy - R), y1 = std::min(ann.height - 1, cy + R);

        double norm = 0.0;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - px, dy = y - py;
                norm += std::exp(-(dx * dx + dy * dy) * inv_two_sigma2);
            }
        const double inv_norm = 1.0 / norm;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - px, dy = y - py;
                out.values(y, x) += std::exp(-(dx * dx + dy * dy) * inv_two_sigma2) * inv_norm;
            }
    }
    return out;
}

DensityMap pool_to_model_resolution(const DensityMap& map, int divisor) {
    const int H = map.values.dim(0), W = map.values.dim(1);
    if (H % divisor != 0 || W % divisor != 0)
        throw ValidationError("pool_to_model_resolution: dimensions not divisible by " +
                              std::to_string(divisor) + " (padding contract violation)");
    DensityMap out;
    out.resolution_divisor = map.resolution_divisor * divisor;
    out.values = Tensor({H / divisor, W / divisor});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            out.values(y / divisor, x / divisor) += map.values(y, x);
    return out;
}

LevelMaskGT build_level_masks(const DensityMap& pooled, const GTConfig& config, int num_levels) {
    config.validate(num_levels);
    const int H = pooled.values.dim(0), W = pooled.values.dim(1);
    LevelMaskGT out;
    out.labels = Tensor({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double v = pooled.values(y, x);
            if (v < config.background_epsilon) {
                out.labels(y, x) = 0.0;
                continue;
            }
            int level = 1;
            for (double t : config.level_thresholds)
                if (v >= t) ++level;  // ties go to the higher level
            out.labels(y, x) = static_cast<double>(level);
        }
    return out;
}

std::vector<double> quantile_thresholds(const std::vector<DensityMap>& pooled_maps,
                                        double background_epsilon, int num_levels) {
    std::vector<double> cells;
    for (const auto& m : pooled_maps)
        for (size_t i = 0; i < m.values.size(); ++i)
            if (m.values[i] >= background_epsilon) cells.push_back(m.values[i]);
    std::vector<double> thresholds;
    if (num_levels <= 1) return thresholds;
    if (cells.empty())
        throw ValidationError("quantile_thresholds: no foreground cells in dataset");
    std::sort(cells.begin(), cells.end());
    for (int i = 1; i < num_levels; ++i) {
        const double q = static_cast<double>(i) / num_levels;
        size_t pos = static_cast<size_t>(q * (cells.size() - 1));
        thresholds.push_back(cells[pos]);
    }
    // de-duplicate pathological ties so the ascending invariant holds
    for (size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1])
            thresholds[i] = std::nextafter(thresholds[i - 1], 1e300);
    return thresholds;
}

namespace {

void splat_blob(Tensor& img, double cx, double cy, double sigma, double amplitude) {
    const int H = img.dim(0), W = img.dim(1);
    const int R = static_cast<int>(std::ceil(3.0 * sigma));
    const int x0 = std::max(0, static_cast<int>(cx) - R);
    const int x1 = std::min(W - 1, static_cast<int>(cx) + R);
    const int y0 = std::max(0, static_cast<int>(cy) - R);
    const int y1 = std::min(H - 1, static_cast<int>(cy) + R);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            img(y, x) += amplitude * std::exp(-(dx * dx + dy * dy) * inv);
        }
}

}  // namespace

SyntheticScene generate_synthetic_scene(uint64_t seed, int width, int height,
                                        const std::vector<ClusterSpec>& clusters) {
    if (width <= 0 || height <= 0)
        throw ConfigError("generate_synthetic_scene: zero-area image");
    for (const auto& c : clusters) {
        if (c.count < 0) throw ConfigError("generate_synthetic_scene: negative cluster count");
        if (c.center_x < 0 || c.center_x >= width || c.center_y < 0 || c.center_y >= height)
            throw ConfigError("generate_synthetic_scene: cluster center outside image");
    }

    std::mt19937 rng(static_cast<uint32_t>(seed * 0x9E3779B9ull + 0x7F4A7C15ull));
    SyntheticScene scene;
    scene.image = Tensor({height, width});
    scene.annotations.image_id = "scene_" + std::to_string(seed);
    scene.annotations.width = width;
    scene.annotations.height = height;

    // Background clutter: a smooth diagonal gradient, two sinusoidal bands and
    // a handful of dim rectangles. None of it correlates with the head count.
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double gdir = u01(rng) * 2.0 * M_PI;
    const double fx = 2.0 * M_PI * (1.0 + 3.0 * u01(rng)) / width;
    const double fy = 2.0 * M_PI * (1.0 + 3.0 * u01(rng)) / height;
    const double phase1 = u01(rng) * 2.0 * M_PI, phase2 = u01(rng) * 2.0 * M_PI;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double g = (x * std::cos(gdir) + y * std::sin(gdir)) /
                             std::max(width, height);
            scene.image(y, x) = 0.10 + 0.08 * g +
                                0.06 * std::sin(fx * x + phase1) +
                                0.06 * std::sin(fy * y + phase2);
        }
    const int num_rects = 2 + static_cast<int>(u01(rng) * 3.0);
    for (int r = 0; r < num_rects; ++r) {
        const int rw = 3 + static_cast<int>(u01(rng) * (width / 4));
        const int rh = 3 + static_cast<int>(u01(rng) * (height / 4));
        const int rx = static_cast<int>(u01(rng) * (width - rw));
        const int ry = static_cast<int>(u01(rng) * (height - rh));
        const double amp = 0.05 + 0.10 * u01(rng);
        for (int y = ry; y < ry + rh; ++y)
            for (int x = rx; x < rx + rw; ++x) scene.image(y, x) += amp;
    }

    // Persons: clipped normal draws around each cluster center, rendered as
    // bright compact blobs.
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& c : clusters) {
        for (int i = 0; i < c.count; ++i) {
            double px = c.center_x + gauss(rng) * c.spread;
            double py = c.center_y + gauss(rng) * c.spread;
            px = std::clamp(px, 0.0, width - 1e-3);
            py = std::clamp(py, 0.0, height - 1e-3);
            scene.annotations.points.emplace_back(px, py);
            splat_blob(scene.image, px, py, 1.1, 0.85);
        }
    }

    for (size_t i = 0; i < scene.image.size(); ++i)
        scene.image[i] = std::clamp(scene.image[i], 0.0, 1.0);
    return scene;
}

SyntheticScene standard_scene(uint64_t seed, int width, int height) {
    std::mt19937 rng(static_cast<uint32_t>(seed ^ 0xC0FFEEull));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int total = static_cast<int>(u01(rng) * 61.0);  // 0..60 persons
    const int num_clusters = 1 + static_cast<int>(u01(rng) * 3.0);

    std::vector<ClusterSpec> clusters(num_clusters);
    int remaining = total;
    for (int i = 0; i < num_clusters; ++i) {
        ClusterSpec& c = clusters[i];
        c.center_x = (0.15 + 0.7 * u01(rng)) * width;
        c.center_y = (0.15 + 0.7 * u01(rng)) * height;
        c.spread = (0.04 + 0.12 * u01(rng)) * std::min(width, height);
        c.count = (i + 1 == num_clusters)
                      ? remaining
                      : static_cast<int>(u01(rng) * (remaining + 1));
        remaining -= c.count;
    }
    return generate_synthetic_scene(seed, width, height, clusters);
}

}  // namespace hdnet::gt
