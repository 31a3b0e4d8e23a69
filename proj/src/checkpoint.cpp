#include "hdnet/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "hdnet/errors.hpp"

namespace hdnet {

namespace {

constexpr char kMagic[4] = {'H', 'D', 'C', 'P'};
constexpr uint32_t kVersion = 1;

struct Entry {
    std::string path;
    Tensor* tensor;
};

std::vector<Entry> all_tensors(HDNet& model) {
    std::vector<Entry> entries;
    for (auto& p : model.parameters()) entries.push_back({p.path, &p.var->value});
    for (auto& b : model.buffers()) entries.push_back({b.path, b.tensor});
    return entries;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, HDNet& model) {
    auto entries = all_tensors(model);
    nlohmann::json table = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& e : entries) {
        table.push_back({{"path", e.path}, {"shape", e.tensor->shape()}, {"offset", offset}});
        offset += e.tensor->size();
    }
    nlohmann::json header{{"model_config", model.config()}, {"tensors", std::move(table)}};
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw FileError("save_checkpoint: cannot open " + path.string());
    os.write(kMagic, 4);
    const uint32_t ver = kVersion;
    os.write(reinterpret_cast<const char*>(&ver), 4);
    const uint64_t len = header_str.size();
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(header_str.data(), static_cast<std::streamsize>(len));
    for (const auto& e : entries) {
        std::vector<float> buf(e.tensor->size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>((*e.tensor)[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw FileError("save_checkpoint: write failed for " + path.string());
}

namespace {

nlohmann::json read_header(std::ifstream& is, const std::filesystem::path& path) {
    char magic[4];
    uint32_t ver = 0;
    uint64_t len = 0;
    is.read(magic, 4);
    is.read(reinterpret_cast<char*>(&ver), 4);
    is.read(reinterpret_cast<char*>(&len), 8);
    if (!is || std::string(magic, 4) != std::string(kMagic, 4))
        throw FileError("checkpoint: bad magic in " + path.string());
    if (ver != kVersion)
        throw FileError("checkpoint: unsupported version in " + path.string());
    std::string header(len, '\0');
    is.read(header.data(), static_cast<std::streamsize>(len));
    if (!is) throw FileError("checkpoint: truncated header in " + path.string());
    return nlohmann::json::parse(header);
}

}  // namespace

ModelConfig load_checkpoint_config(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("checkpoint: cannot open " + path.string());
    return read_header(is, path).at("model_config").get<ModelConfig>();
}

void load_checkpoint_into(const std::filesystem::path& path, HDNet& model) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileError("checkpoint: cannot open " + path.string());
    nlohmann::json header = read_header(is, path);
    const std::streampos data_start = is.tellg();

    std::map<std::string, Tensor*> by_path;
    for (auto& e : all_tensors(model)) by_path[e.path] = e.tensor;

    size_t matched = 0;
    for (const auto& row : header.at("tensors")) {
        const std::string tpath = row.at("path").get<std::string>();
        auto it = by_path.find(tpath);
        if (it == by_path.end())
            throw FileError("checkpoint: unknown tensor path " + tpath);
        Tensor* t = it->second;
        const auto shape = row.at("shape").get<std::vector<int>>();
        if (shape != t->shape())
            throw FileError("checkpoint: shape mismatch for " + tpath);
        const uint64_t offset = row.at("offset").get<uint64_t>();
        is.seekg(data_start + static_cast<std::streamoff>(offset * sizeof(float)));
        std::vector<float> buf(t->size());
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!is) throw FileError("checkpoint: truncated data in " + path.string());
        for (size_t i = 0; i < buf.size(); ++i) (*t)[i] = static_cast<double>(buf[i]);
        ++matched;
    }
    if (matched != by_path.size())
        throw FileError("checkpoint: tensor count mismatch in " + path.string());
}

std::unique_ptr<HDNet> load_model(const std::filesystem::path& path) {
    auto config = load_checkpoint_config(path);
    auto model = std::make_unique<HDNet>(config, 0);
    load_checkpoint_into(path, *model);
    return model;
}

}  // namespace hdnet
