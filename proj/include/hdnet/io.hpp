#pragma once

#include <filesystem>
#include <string>

#include "hdnet/gt_pipeline.hpp"
#include "hdnet/tensor.hpp"

namespace hdnet::io {

// Binary grid container: 16-byte header (4-byte magic, uint32 H, W, divisor,
// little-endian) followed by H*W float32 values, row-major.
// Magic "HDDM" holds density maps, "HDLM" holds level-label grids.
inline constexpr char kDensityMagic[4] = {'H', 'D', 'D', 'M'};
inline constexpr char kLabelMagic[4] = {'H', 'D', 'L', 'M'};

void save_grid(const std::filesystem::path& path, const Tensor& grid,
               int divisor, const char magic[4]);
Tensor load_grid(const std::filesystem::path& path, int& divisor_out,
                 const char expected_magic[4]);

void save_density(const std::filesystem::path& path, const gt::DensityMap& map);
gt::DensityMap load_density(const std::filesystem::path& path);

void save_level_masks(const std::filesystem::path& path, const gt::LevelMaskGT& masks);
gt::LevelMaskGT load_level_masks(const std::filesystem::path& path);

// Annotation JSON: {"image_id": ..., "width": W, "height": H,
//                   "points": [[x, y], ...]}
void save_annotations(const std::filesystem::path& path, const gt::PointAnnotationSet& ann);
gt::PointAnnotationSet load_annotations(const std::filesystem::path& path);

// 8-bit grayscale PNG; values are clamped to [0, 1] and scaled to 0..255.
void save_png_gray(const std::filesystem::path& path, const Tensor& grid);
Tensor load_png_gray(const std::filesystem::path& path);  // back to [0, 1]

// Heatmap PNG with per-image max normalization and the JET colormap.
void save_png_heatmap(const std::filesystem::path& path, const Tensor& grid);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace hdnet::io
