#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <json.hpp>

#include "hdnet/checkpoint.hpp"
#include "hdnet/io.hpp"
#include "hdnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hdnet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitDivergence = 4;

// Hash every file under `dir` (except manifest.json itself) into a manifest.
void write_manifest(const fs::path& dir, const std::string& command, uint64_t seed,
                    const json& config) {
    std::map<std::string, std::string> hashes;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir).generic_string();
        if (rel == "manifest.json") continue;
        hashes[rel] = io::sha256_file(e.path());
    }
    json manifest{{"schema_version", 1},
                  {"command", command},
                  {"seed", seed},
                  {"config", config},
                  {"outputs", hashes}};
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << "\n";
}

json load_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw FileError("cannot open " + path.string());
    try {
        json j;
        is >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

std::pair<int, int> parse_size(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos)
        throw ConfigError("--size must look like HxW, got '" + s + "'");
    try {
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("--size must look like HxW, got '" + s + "'");
    }
}

Tensor pad_to_multiple(const Tensor& img, int div) {
    const int H = img.dim(0), W = img.dim(1);
    const int Hp = (H + div - 1) / div * div;
    const int Wp = (W + div - 1) / div * div;
    if (Hp == H && Wp == W) return img;
    Tensor out({Hp, Wp});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out(y, x) = img(y, x);
    return out;
}

int cmd_gen_data(const fs::path& out, int scenes, const std::string& size, uint64_t seed) {
    auto [h, w] = parse_size(size);
    if (h <= 0 || w <= 0) throw ConfigError("--size must be positive");
    fs::create_directories(out / "images");
    fs::create_directories(out / "annotations");
    for (int i = 0; i < scenes; ++i) {
        auto scene = gt::standard_scene(seed + static_cast<uint64_t>(i), w, h);
        const std::string id = scene.annotations.image_id;
        io::save_png_gray(out / "images" / (id + ".png"), scene.image);
        io::save_annotations(out / "annotations" / (id + ".json"), scene.annotations);
    }
    write_manifest(out, "gen-data", seed,
                   json{{"scenes", scenes}, {"size", size}});
    std::cout << "wrote " << scenes << " scenes to " << out.string() << "\n";
    return 0;
}

int cmd_make_gt(const fs::path& data, double sigma, int levels,
                const std::string& thresholds, double epsilon) {
    gt::GTConfig cfg;
    cfg.sigma = sigma;
    cfg.kernel_truncation_radius = static_cast<int>(std::ceil(4.0 * sigma));
    cfg.background_epsilon = epsilon;

    const auto ann_dir = data / "annotations";
    if (!fs::is_directory(ann_dir))
        throw FileError("no annotations/ directory under " + data.string());
    std::vector<fs::path> ann_files;
    for (const auto& e : fs::directory_iterator(ann_dir))
        if (e.path().extension() == ".json") ann_files.push_back(e.path());
    std::sort(ann_files.begin(), ann_files.end());
    if (ann_files.empty()) throw FileError("no annotations in " + ann_dir.string());

    std::vector<gt::DensityMap> pooled;
    std::vector<std::string> ids;
    for (const auto& af : ann_files) {
        auto ann = io::load_annotations(af);
        pooled.push_back(gt::pool_to_model_resolution(gt::rasterize_density(ann, cfg)));
        ids.push_back(af.stem().string());
    }

    if (thresholds == "auto") {
        if (levels > 1)
            cfg.level_thresholds =
                gt::quantile_thresholds(pooled, cfg.background_epsilon, levels);
    } else {
        std::stringstream ss(thresholds);
        std::string tok;
        while (std::getline(ss, tok, ','))
            cfg.level_thresholds.push_back(std::stod(tok));
    }
    cfg.validate(levels);

    fs::create_directories(data / "gt" / "density");
    fs::create_directories(data / "gt" / "masks");
    for (size_t i = 0; i < ids.size(); ++i) {
        io::save_density(data / "gt" / "density" / (ids[i] + ".bin"), pooled[i]);
        io::save_level_masks(data / "gt" / "masks" / (ids[i] + ".bin"),
                             gt::build_level_masks(pooled[i], cfg, levels));
    }
    json gt_json{{"sigma", cfg.sigma},
                 {"kernel_truncation_radius", cfg.kernel_truncation_radius},
                 {"background_epsilon", cfg.background_epsilon},
                 {"level_thresholds", cfg.level_thresholds},
                 {"num_levels", levels}};
    std::ofstream(data / "gt" / "gt_config.json") << gt_json.dump(2) << "\n";
    write_manifest(data, "make-gt", 0, gt_json);
    std::cout << "wrote ground truth for " << ids.size() << " images\n";
    return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& out,
              std::optional<uint64_t> seed_flag, std::optional<int> epochs_flag) {
    json j = load_json_file(config_path);
    if (j.value("schema_version", 0) != 1)
        throw ConfigError("config: schema_version must be 1 (field-path: /schema_version)");

    ModelConfig mc;
    TrainConfig tc;
    try {
        if (j.contains("model")) mc = j.at("model").get<ModelConfig>();
        if (j.contains("train")) tc = j.at("train").get<TrainConfig>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    // flags override file values
    if (seed_flag) tc.seed = *seed_flag;
    if (epochs_flag) tc.epochs = *epochs_flag;
    mc.validate();
    tc.validate();

    if (!j.contains("data") || !j.at("data").contains("train_dir"))
        throw ConfigError("config: missing /data/train_dir");
    Dataset train_set = load_dataset_dir(j.at("data").at("train_dir").get<std::string>());
    Dataset val_set;
    if (j.at("data").contains("val_dir"))
        val_set = load_dataset_dir(j.at("data").at("val_dir").get<std::string>());

    fs::create_directories(out);
    HDNet model(mc, tc.seed);
    auto result = train(model, tc, train_set, val_set,
                        val_set.empty() ? std::nullopt
                                        : std::optional<fs::path>(out / "checkpoint.ckpt"));
    if (val_set.empty()) save_checkpoint(out / "checkpoint.ckpt", model);
    save_history_jsonl(out / "history.jsonl", result);
    write_manifest(out, "train", tc.seed, j);
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        std::cout << "final: l_reg=" << last.l_reg << " l_dec=" << last.l_dec
                  << " val_mae=" << last.val_mae << " val_mse=" << last.val_mse << "\n";
    }
    std::cout << "best_val_mae=" << result.best_val_mae << "\n";
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data,
             const std::optional<fs::path>& out) {
    if (!fs::exists(checkpoint)) throw FileError("no such checkpoint: " + checkpoint.string());
    auto model = load_model(checkpoint);
    auto dataset = load_dataset_dir(data);
    auto record = evaluate_model(*model, dataset);
    if (out) save_eval_report(*out, record);
    std::cout << eval_to_json(record).dump(2) << "\n";
    return 0;
}

int cmd_ablate(const fs::path& suite_path, const fs::path& out) {
    json j = load_json_file(suite_path);
    if (j.value("schema_version", 0) != 1)
        throw ConfigError("suite: schema_version must be 1 (field-path: /schema_version)");

    TrainConfig tc;
    if (j.contains("train")) tc = j.at("train").get<TrainConfig>();
    Dataset train_set = load_dataset_dir(j.at("data").at("train_dir").get<std::string>());
    Dataset val_set = load_dataset_dir(j.at("data").at("val_dir").get<std::string>());

    std::vector<uint64_t> seeds = j.value("seeds", std::vector<uint64_t>{0, 1, 2});
    std::vector<AblationRow> rows;
    for (const auto& row : j.at("rows")) {
        AblationRow r;
        r.name = row.at("name").get<std::string>();
        r.model = row.value("model", json::object()).get<ModelConfig>();
        r.seeds = seeds;
        rows.push_back(std::move(r));
    }

    auto report = run_ablation_suite(rows, tc, train_set, val_set);
    fs::create_directories(out);
    std::ofstream(out / "report.json") << ablation_to_json(report).dump(2) << "\n";
    const std::string table = ablation_to_table(report);
    std::ofstream(out / "report.txt") << table;
    write_manifest(out, "ablate", tc.seed, j);
    std::cout << table;
    return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& image_path,
              const fs::path& out, bool dump_intermediates) {
    if (!fs::exists(checkpoint)) throw FileError("no such checkpoint: " + checkpoint.string());
    if (!fs::exists(image_path)) throw FileError("no such image: " + image_path.string());
    auto model = load_model(checkpoint);
    Tensor image = pad_to_multiple(io::load_png_gray(image_path),
                                   model->config().spatial_divisor());
    auto fwd = model->forward(image, /*training=*/false);

    fs::create_directories(out);
    const int n = model->config().num_levels;
    if (dump_intermediates) {
        for (int i = 0; i < n; ++i) {
            Tensor d({fwd.head_maps[i]->value.dim(1), fwd.head_maps[i]->value.dim(2)});
            std::copy(fwd.head_maps[i]->value.data(),
                      fwd.head_maps[i]->value.data() + d.size(), d.data());
            io::save_png_heatmap(out / ("D_" + std::to_string(i + 1) + ".png"), d);
        }
        for (int c = 0; c <= n; ++c) {
            Tensor m({fwd.masks->value.dim(1), fwd.masks->value.dim(2)});
            for (int y = 0; y < m.dim(0); ++y)
                for (int x = 0; x < m.dim(1); ++x) m(y, x) = fwd.masks->value(c, y, x);
            io::save_png_gray(out / ("mask_" + std::to_string(c) + ".png"), m);
        }
        for (int i = 0; i < n; ++i) {
            Tensor dh({fwd.masks->value.dim(1), fwd.masks->value.dim(2)});
            for (int y = 0; y < dh.dim(0); ++y)
                for (int x = 0; x < dh.dim(1); ++x)
                    dh(y, x) = fwd.head_maps[i]->value(0, y, x) *
                               fwd.masks->value(i + 1, y, x);
            io::save_png_heatmap(out / ("Dhat_" + std::to_string(i + 1) + ".png"), dh);
        }
    }
    Tensor final({fwd.final_density->value.dim(1), fwd.final_density->value.dim(2)});
    std::copy(fwd.final_density->value.data(),
              fwd.final_density->value.data() + final.size(), final.data());
    io::save_png_heatmap(out / "Dtilde.png", final);
    write_manifest(out, "infer", 0, json{{"checkpoint", checkpoint.string()}});
    std::cout << fwd.predicted_count() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HDNet crowd counting: synthetic data, ground truth, training, "
                 "evaluation, ablation and inference"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_out, gd_size = "64x64";
    int gd_scenes = 10;
    uint64_t gd_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    gen->add_option("--out", gd_out, "Output dataset directory")->required();
    gen->add_option("--scenes", gd_scenes, "Number of scenes");
    gen->add_option("--size", gd_size, "Scene size as HxW");
    gen->add_option("--seed", gd_seed, "Base RNG seed");

    // make-gt
    std::string mg_data, mg_thresholds = "auto";
    double mg_sigma = 15.0, mg_epsilon = 1e-3;
    int mg_levels = 3;
    auto* mk = app.add_subcommand("make-gt", "Build density and level-mask ground truth");
    mk->add_option("--data", mg_data, "Dataset directory")->required();
    mk->add_option("--sigma", mg_sigma, "Gaussian kernel stddev in pixels");
    mk->add_option("--levels", mg_levels, "Number of density levels n");
    mk->add_option("--thresholds", mg_thresholds, "'auto' or comma-separated list");
    mk->add_option("--epsilon", mg_epsilon, "Background threshold");

    // train
    std::string tr_config, tr_out;
    uint64_t tr_seed = 0;
    int tr_epochs = 0;
    bool tr_has_seed = false, tr_has_epochs = false;
    auto* tr = app.add_subcommand("train", "Train a model from a JSON config");
    tr->add_option("--config", tr_config, "Config JSON path")->required();
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_option("--seed", tr_seed, "Override config seed")->each([&](const std::string&) {
        tr_has_seed = true;
    });
    tr->add_option("--epochs", tr_epochs, "Override config epochs")
        ->each([&](const std::string&) { tr_has_epochs = true; });

    // eval
    std::string ev_ckpt, ev_data, ev_out;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--data", ev_data, "Dataset directory")->required();
    ev->add_option("--out", ev_out, "Metrics JSON output path");

    // ablate
    std::string ab_suite, ab_out;
    auto* ab = app.add_subcommand("ablate", "Run an ablation suite");
    ab->add_option("--suite", ab_suite, "Suite JSON path")->required();
    ab->add_option("--out", ab_out, "Output directory")->required();

    // infer
    std::string in_ckpt, in_image, in_out = ".";
    bool in_dump = false;
    auto* inf = app.add_subcommand("infer", "Predict a count for one image");
    inf->add_option("--checkpoint", in_ckpt, "Checkpoint path")->required();
    inf->add_option("--image", in_image, "Input PNG image")->required();
    inf->add_option("--out", in_out, "Output directory for heatmaps");
    inf->add_flag("--dump-intermediates", in_dump, "Write D, mask and Dhat maps");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gd_out, gd_scenes, gd_size, gd_seed);
        if (mk->parsed())
            return cmd_make_gt(mg_data, mg_sigma, mg_levels, mg_thresholds, mg_epsilon);
        if (tr->parsed())
            return cmd_train(tr_config, tr_out,
                             tr_has_seed ? std::optional<uint64_t>(tr_seed) : std::nullopt,
                             tr_has_epochs ? std::optional<int>(tr_epochs) : std::nullopt);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_data,
                            ev_out.empty() ? std::nullopt : std::optional<fs::path>(ev_out));
        if (ab->parsed()) return cmd_ablate(ab_suite, ab_out);
        if (inf->parsed()) return cmd_infer(in_ckpt, in_image, in_out, in_dump);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FileError& e) {
        std::cerr << "file error: " << e.what() << "\n";
        return kExitMissingFile;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    }
    return 0;
}
