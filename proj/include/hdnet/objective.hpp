#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdnet/autograd.hpp"
#include "hdnet/gt_pipeline.hpp"

namespace hdnet {

struct LossBreakdown {
    double l_reg = 0.0;
    double l_dec = 0.0;
    double lambda_weight = 1.0;
    double total = 0.0;
};

// total = l_reg + lambda * l_dec, exactly.
LossBreakdown total_loss(double l_reg, double l_dec, double lambda_weight);

// Mean squared error between the predicted map and the pooled target.
ag::Var regression_loss(const ag::Var& pred, const gt::DensityMap& target);

double count_of(const Tensor& density);

struct CountRecord {
    std::string image_id;
    double gt_count = 0.0;
    double predicted_count = 0.0;
};

struct EvalRecord {
    std::vector<CountRecord> per_image;
    int n = 0;
    double mae = 0.0;
    double mse = 0.0;  // RMSE-form: sqrt of mean squared count error
};

EvalRecord evaluate(const std::vector<CountRecord>& records);

nlohmann::json eval_to_json(const EvalRecord& record);
void save_eval_report(const std::filesystem::path& path, const EvalRecord& record);

}  // namespace hdnet
