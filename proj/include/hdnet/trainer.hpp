#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdnet/checkpoint.hpp"
#include "hdnet/model.hpp"
#include "hdnet/objective.hpp"

namespace hdnet {

struct TrainConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;  // set to 0 for plain SGD
    double weight_decay = 0.0005;
    int batch_size = 4;
    int epochs = 20;
    int resize_longer_side = 0;  // 0 = keep native size
    uint64_t seed = 0;
    bool horizontal_flip = false;  // off by default for determinism tests
    int num_workers = 1;

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
        if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
        if (momentum < 0.0) throw ConfigError("train: momentum must be >= 0");
    }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Sample {
    std::string image_id;
    Tensor image;           // (H, W) in [0, 1]
    gt::DensityMap target;  // sum-pooled to divisor 4
    gt::LevelMaskGT masks;
    double gt_count = 0.0;
};

using Dataset = std::vector<Sample>;

// The standard desk-scale synthetic set: scenes standard_scene(seed_base..),
// level thresholds fitted as quantiles on this set's pooled cells.
Dataset make_standard_dataset(uint64_t seed_base, int count, int width, int height,
                              gt::GTConfig& config, int num_levels,
                              bool fit_thresholds);

// Reads a dataset directory (images/*.png, annotations/*.json,
// gt/density/*.bin, gt/masks/*.bin), sorted by image id.
Dataset load_dataset_dir(const std::filesystem::path& dir);

struct EpochStats {
    int epoch = 0;
    double l_reg = 0.0;
    double l_dec = 0.0;
    double total = 0.0;
    double val_mae = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    double best_val_mae = 0.0;
    int best_epoch = -1;
};

EvalRecord evaluate_model(HDNet& model, const Dataset& data);

// Joint optimization of L = L_reg + lambda * L_dec with SGD. Deterministic
// for a fixed seed. If checkpoint_path is set, the best-validation-MAE
// parameters are saved there and best_val_mae is recomputed from the saved
// (float32) weights.
TrainResult train(HDNet& model, const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set,
                  const std::optional<std::filesystem::path>& checkpoint_path);

void save_history_jsonl(const std::filesystem::path& path, const TrainResult& result);

// One ablation row: a named model configuration trained over several seeds.
struct AblationRow {
    std::string name;
    ModelConfig model;
    std::vector<uint64_t> seeds;
    std::vector<double> maes;
    std::vector<double> mses;
    double mean_mae = 0.0, spread_mae = 0.0;
    double mean_mse = 0.0, spread_mse = 0.0;
    // gradient norm of L_reg w.r.t. DDM head params, probed on one batch
    std::vector<double> ddm_grad_norms;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::string ordering_note;  // decoupling-direction check outcome
};

AblationReport run_ablation_suite(const std::vector<AblationRow>& requested,
                                  const TrainConfig& base_train,
                                  const Dataset& train_set, const Dataset& val_set);

nlohmann::json ablation_to_json(const AblationReport& report);
std::string ablation_to_table(const AblationReport& report);

// || d L_reg / d theta_DDM ||_2 on one sample, for the gradient interaction
// probe.
double ddm_grad_norm_from_regression(HDNet& model, const Sample& sample);

}  // namespace hdnet
