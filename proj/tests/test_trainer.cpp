#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "fd_check.hpp"
#include "hdnet/trainer.hpp"

using namespace hdnet;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.num_levels = 2;
    c.channels_per_level = {4, 6};
    c.head_channels = 5;
    return c;
}

Dataset tiny_dataset(int count, gt::GTConfig& gcfg, int num_levels) {
    return make_standard_dataset(0, count, 32, 32, gcfg, num_levels, true);
}

}  // namespace

TEST_CASE("learning rate 0 is rejected; one zero-gradient step shrinks by 1 - lr*wd") {
    TrainConfig tc;
    tc.learning_rate = 0.0;
    CHECK_THROWS_AS(tc.validate(), ConfigError);

    // weight decay as pure L2 shrinkage
    auto p = ag::leaf(Tensor({3}, 2.0));
    nn::SGD opt({{"p", p}}, 0.1, 0.9, 0.05);
    opt.zero_grad();
    opt.step();
    for (int i = 0; i < 3; ++i)
        CHECK(p->value(i) == doctest::Approx(2.0 * (1.0 - 0.1 * 0.05)).epsilon(1e-12));
}

TEST_CASE("training is deterministic for a fixed seed") {
    gt::GTConfig gcfg;
    Dataset train_set = tiny_dataset(6, gcfg, 2);
    Dataset val_set = make_standard_dataset(500, 3, 32, 32, gcfg, 2, false);

    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.seed = 9;

    HDNet m1(tiny_model(), 9);
    HDNet m2(tiny_model(), 9);
    auto r1 = train(m1, tc, train_set, val_set, std::nullopt);
    auto r2 = train(m2, tc, train_set, val_set, std::nullopt);
    REQUIRE(r1.history.size() == r2.history.size());
    for (size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].l_reg == r2.history[i].l_reg);
        CHECK(r1.history[i].l_dec == r2.history[i].l_dec);
        CHECK(r1.history[i].val_mae == r2.history[i].val_mae);
    }
}

TEST_CASE("a couple of epochs reduce the training loss on a tiny set") {
    gt::GTConfig gcfg;
    Dataset train_set = tiny_dataset(8, gcfg, 2);

    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 4;
    tc.learning_rate = 0.01;

    HDNet model(tiny_model(), 1);
    auto r = train(model, tc, train_set, {}, std::nullopt);
    REQUIRE(r.history.size() == 4);
    CHECK(r.history.back().total < r.history.front().total);
}

TEST_CASE("checkpoint round-trip reproduces the recorded validation MAE") {
    gt::GTConfig gcfg;
    Dataset train_set = tiny_dataset(6, gcfg, 2);
    Dataset val_set = make_standard_dataset(600, 3, 32, 32, gcfg, 2, false);

    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 3;

    auto dir = fs::temp_directory_path() / "hdnet_trainer_test";
    fs::create_directories(dir);
    const auto ckpt = dir / "best.ckpt";

    HDNet model(tiny_model(), 5);
    auto r = train(model, tc, train_set, val_set, ckpt);
    REQUIRE(fs::exists(ckpt));

    auto loaded = load_model(ckpt);
    auto ev = evaluate_model(*loaded, val_set);
    CHECK(ev.mae == r.best_val_mae);
}

TEST_CASE("end-to-end gradients match finite differences on sampled parameters") {
    gt::GTConfig gcfg;
    gcfg.level_thresholds = {0.5};
    Dataset data = make_standard_dataset(42, 1, 16, 16, gcfg, 2, false);

    HDNet model(tiny_model(), 11);
    const Sample& s = data[0];

    // inference-statistics mode keeps the loss a fixed smooth function
    auto loss_of = [&] {
        auto fwd = model.forward(s.image, false);
        auto l = ag::add(regression_loss(fwd.final_density, s.target),
                         ag::mul_scalar(decoupling_loss(fwd.logits, s.masks),
                                        model.config().lambda_weight));
        return l;
    };
    ag::backward(loss_of());
    auto eval = [&] { return loss_of()->value(0); };

    auto params = model.parameters();
    std::mt19937 rng(3);
    std::uniform_int_distribution<size_t> pick(0, params.size() - 1);
    int checked = 0;
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        auto& p = params[pick(rng)];
        std::uniform_int_distribution<size_t> elem(0, p.var->value.size() - 1);
        const size_t i = elem(rng);
        const double orig = p.var->value[i];
        const double h = 1e-5;
        p.var->value[i] = orig + h;
        const double fp = eval();
        p.var->value[i] = orig - h;
        const double fm = eval();
        p.var->value[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p.var->grad[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, std::abs(fd - an) / denom);
        ++checked;
    }
    CHECK(checked == 20);
    CHECK(worst < 2e-2);
}

TEST_CASE("history JSON lines contain one record per epoch") {
    gt::GTConfig gcfg;
    Dataset train_set = tiny_dataset(4, gcfg, 2);
    TrainConfig tc;
    tc.epochs = 3;
    HDNet model(tiny_model(), 2);
    auto r = train(model, tc, train_set, {}, std::nullopt);

    auto dir = fs::temp_directory_path() / "hdnet_trainer_test";
    fs::create_directories(dir);
    save_history_jsonl(dir / "history.jsonl", r);

    std::ifstream is(dir / "history.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("ablation suite emits one row per configuration with per-seed entries") {
    gt::GTConfig gcfg;
    Dataset train_set = tiny_dataset(4, gcfg, 2);
    Dataset val_set = make_standard_dataset(700, 2, 32, 32, gcfg, 2, false);

    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 2;

    ModelConfig base = tiny_model();
    AblationRow row_a{"soft_masks", base, {1, 2}, {}, {}};
    ModelConfig truncated = base;
    truncated.use_soft_masks = false;
    AblationRow row_b{"truncated_masks", truncated, {1, 2}, {}, {}};

    auto report = run_ablation_suite({row_a, row_b}, tc, train_set, val_set);
    REQUIRE(report.rows.size() == 2);
    for (const auto& r : report.rows) {
        CHECK(r.maes.size() == 2);
        CHECK(r.mses.size() == 2);
    }
    // truncated masks sever the regression-to-DDM gradient path
    for (double g : report.rows[1].ddm_grad_norms) CHECK(g == 0.0);
    for (double g : report.rows[0].ddm_grad_norms) CHECK(g > 1e-12);

    auto table = ablation_to_table(report);
    CHECK(table.find("soft_masks") != std::string::npos);
    auto j = ablation_to_json(report);
    CHECK(j["rows"].size() == 2);
}
