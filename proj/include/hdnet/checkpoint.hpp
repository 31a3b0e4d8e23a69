#pragma once

#include <filesystem>
#include <memory>

#include "hdnet/model.hpp"

namespace hdnet {

// Checkpoint container: "HDCP" magic, uint32 version, uint64 JSON header
// length, JSON header (ModelConfig plus a table of {path, shape, offset}
// entries), then all tensors concatenated as little-endian float32.
void save_checkpoint(const std::filesystem::path& path, HDNet& model);

ModelConfig load_checkpoint_config(const std::filesystem::path& path);

// Restores parameters and running statistics in place; the model must have
// been built from the checkpoint's config.
void load_checkpoint_into(const std::filesystem::path& path, HDNet& model);

std::unique_ptr<HDNet> load_model(const std::filesystem::path& path);

}  // namespace hdnet
