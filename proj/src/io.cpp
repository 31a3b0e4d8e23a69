#include "hdnet/io.hpp"

#include <openssl/evp.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "hdnet/errors.hpp"

namespace hdnet::io {

namespace {

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_grid(const std::filesystem::path& path, const Tensor& grid,
               int divisor, const char magic[4]) {
    if (grid.ndim() != 2) throw ValidationError("save_grid: expected a rank-2 grid");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FileError("save_grid: cannot open " + path.string());
    os.write(magic, 4);
    write_u32(os, static_cast<uint32_t>(grid.dim(0)));
    write_u32(os, static_cast<uint32_t>(grid.dim(1)));
    write_u32(os, static_cast<uint32_t>(divisor));
    std::vector<float> buf(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) buf[i] = static_cast<float>(grid[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!os) throw FileError("save_grid: write failed for " + path.string());
}

Tensor load_grid(const std::filesystem::path& path, int& divisor_out,
                 const char expected_magic[4]) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("load_grid: cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, expected_magic, 4) != 0)
        throw FileError("load_grid: bad magic in " + path.string());
    const uint32_t h = read_u32(is), w = read_u32(is);
    divisor_out = static_cast<int>(read_u32(is));
    Tensor grid({static_cast<int>(h), static_cast<int>(w)});
    std::vector<float> buf(grid.size());
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw FileError("load_grid: truncated file " + path.string());
    for (size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(buf[i]);
    return grid;
}

void save_density(const std::filesystem::path& path, const gt::DensityMap& map) {
    save_grid(path, map.values, map.resolution_divisor, kDensityMagic);
}

gt::DensityMap load_density(const std::filesystem::path& path) {
    gt::DensityMap map;
    map.values = load_grid(path, map.resolution_divisor, kDensityMagic);
    return map;
}

void save_level_masks(const std::filesystem::path& path, const gt::LevelMaskGT& masks) {
    save_grid(path, masks.labels, 4, kLabelMagic);
}

gt::LevelMaskGT load_level_masks(const std::filesystem::path& path) {
    gt::LevelMaskGT masks;
    int divisor = 0;
    masks.labels = load_grid(path, divisor, kLabelMagic);
    return masks;
}

void save_annotations(const std::filesystem::path& path, const gt::PointAnnotationSet& ann) {
    nlohmann::json j;
    j["image_id"] = ann.image_id;
    j["width"] = ann.width;
    j["height"] = ann.height;
    auto pts = nlohmann::json::array();
    for (const auto& [x, y] : ann.points) pts.push_back({x, y});
    j["points"] = std::move(pts);
    std::ofstream os(path);
    if (!os) throw FileError("save_annotations: cannot open " + path.string());
    os << j.dump(2) << "\n";
}

gt::PointAnnotationSet load_annotations(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw FileError("load_annotations: cannot open " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_annotations: invalid JSON in " + path.string() + ": " + e.what());
    }
    gt::PointAnnotationSet ann;
    try {
        ann.image_id = j.value("image_id", path.stem().string());
        ann.width = j.at("width").get<int>();
        ann.height = j.at("height").get<int>();
        for (const auto& p : j.at("points"))
            ann.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_annotations: schema violation in " + path.string() + ": " +
                          e.what());
    }
    return ann;
}

namespace {

cv::Mat to_u8(const Tensor& grid, bool normalize_max) {
    const int H = grid.dim(0), W = grid.dim(1);
    double scale = 1.0;
    if (normalize_max) {
        double mx = 0.0;
        for (size_t i = 0; i < grid.size(); ++i) mx = std::max(mx, grid[i]);
        scale = mx > 0.0 ? 1.0 / mx : 1.0;
    }
    cv::Mat m(H, W, CV_8UC1);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double v = std::clamp(grid(y, x) * scale, 0.0, 1.0);
            m.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(v * 255.0));
        }
    return m;
}

}  // namespace

void save_png_gray(const std::filesystem::path& path, const Tensor& grid) {
    if (!cv::imwrite(path.string(), to_u8(grid, false)))
        throw FileError("save_png_gray: write failed for " + path.string());
}

Tensor load_png_gray(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw FileError("load_png_gray: cannot read " + path.string());
    Tensor grid({m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x)
            grid(y, x) = static_cast<double>(m.at<uint8_t>(y, x)) / 255.0;
    return grid;
}

void save_png_heatmap(const std::filesystem::path& path, const Tensor& grid) {
    cv::Mat colored;
    cv::applyColorMap(to_u8(grid, true), colored, cv::COLORMAP_JET);
    if (!cv::imwrite(path.string(), colored))
        throw FileError("save_png_heatmap: write failed for " + path.string());
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("sha256_file: cannot open " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        EVP_DigestUpdate(ctx, buf, static_cast<size_t>(is.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

}  // namespace hdnet::io
