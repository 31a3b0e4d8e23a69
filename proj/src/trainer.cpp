#include "hdnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "hdnet/io.hpp"

namespace hdnet {

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate},
                       {"momentum", c.momentum},
                       {"weight_decay", c.weight_decay},
                       {"batch_size", c.batch_size},
                       {"epochs", c.epochs},
                       {"resize_longer_side", c.resize_longer_side},
                       {"seed", c.seed},
                       {"horizontal_flip", c.horizontal_flip},
                       {"num_workers", c.num_workers}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.learning_rate = j.value("learning_rate", 0.001);
    c.momentum = j.value("momentum", 0.9);
    c.weight_decay = j.value("weight_decay", 0.0005);
    c.batch_size = j.value("batch_size", 4);
    c.epochs = j.value("epochs", 20);
    c.resize_longer_side = j.value("resize_longer_side", 0);
    c.seed = j.value("seed", uint64_t{0});
    c.horizontal_flip = j.value("horizontal_flip", false);
    c.num_workers = j.value("num_workers", 1);
    c.validate();
}

Dataset make_standard_dataset(uint64_t seed_base, int count, int width, int height,
                              gt::GTConfig& config, int num_levels,
                              bool fit_thresholds) {
    std::vector<gt::SyntheticScene> scenes;
    std::vector<gt::DensityMap> pooled;
    scenes.reserve(count);
    for (int i = 0; i < count; ++i) {
        auto scene = gt::standard_scene(seed_base + static_cast<uint64_t>(i), width, height);
        pooled.push_back(
            gt::pool_to_model_resolution(gt::rasterize_density(scene.annotations, config)));
        scenes.push_back(std::move(scene));
    }
    if (fit_thresholds && num_levels > 1)
        config.level_thresholds =
            gt::quantile_thresholds(pooled, config.background_epsilon, num_levels);

    Dataset data;
    data.reserve(scenes.size());
    for (size_t i = 0; i < scenes.size(); ++i) {
        Sample s;
        s.image_id = scenes[i].annotations.image_id;
        s.image = std::move(scenes[i].image);
        s.gt_count = static_cast<double>(scenes[i].annotations.points.size());
        s.masks = gt::build_level_masks(pooled[i], config, num_levels);
        s.target = std::move(pooled[i]);
        data.push_back(std::move(s));
    }
    return data;
}

Dataset load_dataset_dir(const std::filesystem::path& dir) {
    const auto ann_dir = dir / "annotations";
    if (!std::filesystem::is_directory(ann_dir))
        throw FileError("load_dataset_dir: no annotations/ under " + dir.string());
    std::vector<std::filesystem::path> ann_files;
    for (const auto& e : std::filesystem::directory_iterator(ann_dir))
        if (e.path().extension() == ".json") ann_files.push_back(e.path());
    std::sort(ann_files.begin(), ann_files.end());

    Dataset data;
    for (const auto& af : ann_files) {
        auto ann = io::load_annotations(af);
        const std::string id = af.stem().string();
        Sample s;
        s.image_id = id;
        s.image = io::load_png_gray(dir / "images" / (id + ".png"));
        s.gt_count = static_cast<double>(ann.points.size());
        s.target = io::load_density(dir / "gt" / "density" / (id + ".bin"));
        s.masks = io::load_level_masks(dir / "gt" / "masks" / (id + ".bin"));
        data.push_back(std::move(s));
    }
    if (data.empty()) throw FileError("load_dataset_dir: empty dataset in " + dir.string());
    return data;
}

EvalRecord evaluate_model(HDNet& model, const Dataset& data) {
    std::vector<CountRecord> records;
    records.reserve(data.size());
    for (const auto& s : data) {
        auto r = model.forward(s.image, /*training=*/false);
        records.push_back({s.image_id, s.gt_count, r.predicted_count()});
    }
    return evaluate(records);
}

namespace {

Tensor flip_horizontal(const Tensor& grid) {
    const int H = grid.dim(0), W = grid.dim(1);
    Tensor out({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out(y, x) = grid(y, W - 1 - x);
    return out;
}

}  // namespace

TrainResult train(HDNet& model, const TrainConfig& config, const Dataset& train_set,
                  const Dataset& val_set,
                  const std::optional<std::filesystem::path>& checkpoint_path) {
    config.validate();
    const double lambda = model.config().lambda_weight;
    nn::SGD opt(model.parameters(), config.learning_rate, config.momentum,
                config.weight_decay);
    std::mt19937 rng(static_cast<uint32_t>(config.seed * 0x2545F491ull + 0x9E3779B9ull));

    TrainResult result;
    result.best_val_mae = std::numeric_limits<double>::infinity();

    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});

    int64_t step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double ep_reg = 0.0, ep_dec = 0.0;
        size_t seen = 0;

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t end = std::min(order.size(), start + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            opt.zero_grad();
            for (size_t b = start; b < end; ++b) {
                const Sample& s = train_set[order[b]];
                Tensor image = s.image;
                gt::DensityMap target = s.target;
                gt::LevelMaskGT masks = s.masks;
                if (config.horizontal_flip && rng() % 2 == 0) {
                    image = flip_horizontal(image);
                    target.values = flip_horizontal(target.values);
                    masks.labels = flip_horizontal(masks.labels);
                }

                auto fwd = model.forward(image, /*training=*/true);
                auto l_reg = regression_loss(fwd.final_density, target);
                auto l_dec = decoupling_loss(fwd.logits, masks);
                auto total =
                    ag::add(ag::mul_scalar(l_reg, inv_batch),
                            ag::mul_scalar(l_dec, lambda * inv_batch));
                if (!std::isfinite(total->value(0)))
                    throw DivergenceError("train: non-finite loss at step " +
                                          std::to_string(step) + " (epoch " +
                                          std::to_string(epoch) + ")");
                ag::backward(total);
                ep_reg += l_reg->value(0);
                ep_dec += l_dec->value(0);
                ++seen;
                ++step;
            }
            opt.step();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.l_reg = ep_reg / static_cast<double>(seen);
        stats.l_dec = ep_dec / static_cast<double>(seen);
        stats.total = stats.l_reg + lambda * stats.l_dec;
        if (!val_set.empty()) {
            auto ev = evaluate_model(model, val_set);
            stats.val_mae = ev.mae;
            stats.val_mse = ev.mse;
            if (ev.mae < result.best_val_mae) {
                result.best_val_mae = ev.mae;
                result.best_epoch = epoch;
                if (checkpoint_path) save_checkpoint(*checkpoint_path, model);
            }
        }
        result.history.push_back(stats);
    }

    // Re-derive the best MAE from the float32 weights actually on disk, so
    // the recorded number matches what a reader of the checkpoint will see.
    if (checkpoint_path && result.best_epoch >= 0 && !val_set.empty()) {
        auto best = load_model(*checkpoint_path);
        result.best_val_mae = evaluate_model(*best, val_set).mae;
    }
    return result;
}

void save_history_jsonl(const std::filesystem::path& path, const TrainResult& result) {
    std::ofstream os(path);
    if (!os) throw FileError("save_history_jsonl: cannot open " + path.string());
    for (const auto& h : result.history) {
        nlohmann::json j{{"epoch", h.epoch},     {"l_reg", h.l_reg},
                         {"l_dec", h.l_dec},     {"total", h.total},
                         {"val_mae", h.val_mae}, {"val_mse", h.val_mse}};
        os << j.dump() << "\n";
    }
}

double ddm_grad_norm_from_regression(HDNet& model, const Sample& sample) {
    auto params = model.parameters();
    for (auto& p : params) p.var->zero_grad();
    auto fwd = model.forward(sample.image, /*training=*/true);
    auto l_reg = regression_loss(fwd.final_density, sample.target);
    ag::backward(l_reg);
    double norm2 = 0.0;
    for (auto& p : model.ddm_parameters())
        for (size_t i = 0; i < p.var->grad.size(); ++i)
            norm2 += p.var->grad[i] * p.var->grad[i];
    return std::sqrt(norm2);
}

namespace {

void finalize_row(AblationRow& row) {
    auto mean_spread = [](const std::vector<double>& xs, double& mean, double& spread) {
        mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
        double lo = *std::min_element(xs.begin(), xs.end());
        double hi = *std::max_element(xs.begin(), xs.end());
        spread = (hi - lo) / 2.0;
    };
    mean_spread(row.maes, row.mean_mae, row.spread_mae);
    mean_spread(row.mses, row.mean_mse, row.spread_mse);
}

}  // namespace

AblationReport run_ablation_suite(const std::vector<AblationRow>& requested,
                                  const TrainConfig& base_train,
                                  const Dataset& train_set, const Dataset& val_set) {
    // Rows may differ in num_levels, so level-mask labels are rebuilt per row
    // with thresholds refitted on the training split's pooled densities.
    std::vector<gt::DensityMap> train_pooled;
    train_pooled.reserve(train_set.size());
    for (const auto& s : train_set) train_pooled.push_back(s.target);

    AblationReport report;
    for (const auto& req : requested) {
        AblationRow row = req;
        row.maes.clear();
        row.mses.clear();
        row.ddm_grad_norms.clear();

        gt::GTConfig gcfg;
        if (row.model.num_levels > 1)
            gcfg.level_thresholds = gt::quantile_thresholds(
                train_pooled, gcfg.background_epsilon, row.model.num_levels);
        auto rebuild = [&](const Dataset& src) {
            Dataset out = src;
            for (auto& s : out)
                s.masks = gt::build_level_masks(s.target, gcfg, row.model.num_levels);
            return out;
        };
        const Dataset row_train = rebuild(train_set);
        const Dataset row_val = rebuild(val_set);

        for (uint64_t seed : row.seeds) {
            HDNet model(row.model, seed);
            TrainConfig tc = base_train;
            tc.seed = seed;
            auto tr = train(model, tc, row_train, row_val, std::nullopt);
            // report the best-validation epoch, not wherever training stopped
            const EpochStats* best = nullptr;
            for (const auto& h : tr.history)
                if (!best || h.val_mae < best->val_mae) best = &h;
            if (best) {
                row.maes.push_back(best->val_mae);
                row.mses.push_back(best->val_mse);
            } else {
                auto ev = evaluate_model(model, row_val);
                row.maes.push_back(ev.mae);
                row.mses.push_back(ev.mse);
            }
            row.ddm_grad_norms.push_back(
                ddm_grad_norm_from_regression(model, row_train.front()));
        }
        finalize_row(row);
        report.rows.push_back(std::move(row));
    }

    // Decoupling-direction check across rows named like the decoupling table.
    auto find_row = [&](const std::string& name) -> const AblationRow* {
        for (const auto& r : report.rows)
            if (r.name == name) return &r;
        return nullptr;
    };
    const AblationRow* base = find_row("baseline");
    const AblationRow* fb = find_row("fb_decoupling");
    const AblationRow* fbfd = find_row("fb_fd_decoupling");
    if (base && fb && fbfd) {
        if (fbfd->mean_mae <= fb->mean_mae && fb->mean_mae <= base->mean_mae)
            report.ordering_note = "decoupling ordering holds: FB+FD <= FB <= baseline";
        else {
            std::ostringstream os;
            os << "decoupling ordering VIOLATED: baseline=" << base->mean_mae
               << " fb=" << fb->mean_mae << " fb_fd=" << fbfd->mean_mae
               << " (per-seed baseline:";
            for (double m : base->maes) os << " " << m;
            os << "; fb:";
            for (double m : fb->maes) os << " " << m;
            os << "; fb_fd:";
            for (double m : fbfd->maes) os << " " << m;
            os << ")";
            report.ordering_note = os.str();
        }
    }
    return report;
}

nlohmann::json ablation_to_json(const AblationReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json j{{"name", r.name},
                         {"seeds", r.seeds},
                         {"mae", r.maes},
                         {"mse", r.mses},
                         {"mean_mae", r.mean_mae},
                         {"spread_mae", r.spread_mae},
                         {"mean_mse", r.mean_mse},
                         {"spread_mse", r.spread_mse},
                         {"ddm_grad_norm_from_l_reg", r.ddm_grad_norms},
                         {"model_config", r.model}};
        rows.push_back(std::move(j));
    }
    return nlohmann::json{{"rows", std::move(rows)}, {"ordering_note", report.ordering_note}};
}

std::string ablation_to_table(const AblationReport& report) {
    std::ostringstream os;
    os << "configuration              MAE (mean+-spread)    MSE (mean+-spread)   seeds\n";
    os << "-------------------------------------------------------------------------\n";
    os.setf(std::ios::fixed);
    os.precision(3);
    for (const auto& r : report.rows) {
        os.width(26);
        os.setf(std::ios::left, std::ios::adjustfield);
        os << r.name;
        os.unsetf(std::ios::adjustfield);
        os << " " << r.mean_mae << " +- " << r.spread_mae << "      " << r.mean_mse
           << " +- " << r.spread_mse << "     " << r.seeds.size() << "\n";
    }
    if (!report.ordering_note.empty()) os << "\n" << report.ordering_note << "\n";
    return os.str();
}

}  // namespace hdnet
