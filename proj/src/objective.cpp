#include "hdnet/objective.hpp"

#include <cmath>
#include <fstream>

#include "hdnet/errors.hpp"

namespace hdnet {

LossBreakdown total_loss(double l_reg, double l_dec, double lambda_weight) {
    if (lambda_weight < 0.0) throw ConfigError("total_loss: lambda must be >= 0");
    LossBreakdown b;
    b.l_reg = l_reg;
    b.l_dec = l_dec;
    b.lambda_weight = lambda_weight;
    b.total = l_reg + lambda_weight * l_dec;
    return b;
}

ag::Var regression_loss(const ag::Var& pred, const gt::DensityMap& target) {
    const Tensor& t = target.values;
    // single-channel rank-3 predictions compare against the rank-2 target grid
    if (pred->value.ndim() == 3 && pred->value.dim(0) == 1 && t.ndim() == 2 &&
        pred->value.dim(1) == t.dim(0) && pred->value.dim(2) == t.dim(1)) {
        Tensor lifted({1, t.dim(0), t.dim(1)});
        std::copy(t.data(), t.data() + t.size(), lifted.data());
        return ag::mse_mean(pred, lifted);
    }
    if (!pred->value.same_shape(t))
        throw ValidationError("regression_loss: prediction/target shape mismatch");
    return ag::mse_mean(pred, t);
}

double count_of(const Tensor& density) { return density.sum(); }

EvalRecord evaluate(const std::vector<CountRecord>& records) {
    if (records.empty()) throw ValidationError("evaluate: empty record set");
    EvalRecord out;
    out.per_image = records;
    out.n = static_cast<int>(records.size());
    double abs_sum = 0.0, sq_sum = 0.0;
    for (const auto& r : records) {
        const double err = r.gt_count - r.predicted_count;
        abs_sum += std::abs(err);
        sq_sum += err * err;
    }
    out.mae = abs_sum / out.n;
    out.mse = std::sqrt(sq_sum / out.n);
    return out;
}

nlohmann::json eval_to_json(const EvalRecord& record) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : record.per_image)
        rows.push_back({{"image_id", r.image_id},
                        {"gt_count", r.gt_count},
                        {"predicted_count", r.predicted_count}});
    return nlohmann::json{{"per_image", std::move(rows)},
                          {"n", record.n},
                          {"mae", record.mae},
                          {"mse", record.mse}};
}

void save_eval_report(const std::filesystem::path& path, const EvalRecord& record) {
    std::ofstream os(path);
    if (!os) throw FileError("save_eval_report: cannot open " + path.string());
    os << eval_to_json(record).dump(2) << "\n";
}

}  // namespace hdnet
