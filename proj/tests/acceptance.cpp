// Acceptance gate: one pass/fail line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hdnet/io.hpp"
#include "hdnet/trainer.hpp"

using namespace hdnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& what, bool ok,
            const std::string& detail = "") {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": "
              << what;
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1
void count_conservation() {
    const double t0 = now_seconds();
    gt::GTConfig cfg;  // sigma 15, truncation 60
    double worst_raster = 0.0, worst_pool = 0.0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        auto scene = gt::standard_scene(seed, 64, 64);
        auto density = gt::rasterize_density(scene.annotations, cfg);
        const double n_points = static_cast<double>(scene.annotations.points.size());
        worst_raster = std::max(worst_raster, std::abs(density.count() - n_points));
        auto pooled = gt::pool_to_model_resolution(density);
        worst_pool = std::max(worst_pool, std::abs(pooled.count() - density.count()));
    }
    const double elapsed = now_seconds() - t0;
    std::ostringstream d;
    d << "max |sum-count| = " << worst_raster << ", max pooling drift = "
      << worst_pool << ", " << elapsed << " s";
    report(1, "count conservation over 100 annotation sets",
           worst_raster < 1e-4 && worst_pool < 1e-6 && elapsed < 30.0, d.str());
}

// ---------------------------------------------------------------- criterion 2
void softmax_normalization() {
    std::mt19937 rng(7);
    double worst = 0.0;
    bool finite = true;
    for (int rep = 0; rep < 1000; ++rep) {
        const int C = 2 + static_cast<int>(rng() % 4);
        // sweep magnitudes up to 1e4, including extremes
        const double scale = std::pow(10.0, -1.0 + 5.0 * (rep / 999.0));
        Tensor logits({C, 1, 1});
        std::uniform_real_distribution<double> u(-scale, scale);
        for (int c = 0; c < C; ++c) logits(c, 0, 0) = u(rng);
        auto m = soft_masks(ag::constant(logits));
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            const double v = m->value(c, 0, 0);
            if (!std::isfinite(v)) finite = false;
            sum += v;
        }
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    std::ostringstream d;
    d << "max |channel sum - 1| = " << worst;
    report(2, "softmax masks normalize and stay finite up to |logit| = 1e4",
           finite && worst < 1e-6, d.str());
}

// ---------------------------------------------------------------- criterion 3
void saff_identity() {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        ModelConfig mc;
        mc.num_levels = 2 + static_cast<int>(rng() % 2);
        mc.channels_per_level.clear();
        for (int i = 0; i < mc.num_levels; ++i)
            mc.channels_per_level.push_back(2 + static_cast<int>(rng() % 3));
        std::mt19937 init_rng(static_cast<uint32_t>(100 + rep));
        SAFF saff(mc, init_rng);  // w starts at zero

        FeaturePyramid pyr;
        int H = 16, W = 16;
        for (int i = 0; i < mc.num_levels; ++i) {
            Tensor x({mc.channels_per_level[i], H, W});
            for (size_t j = 0; j < x.size(); ++j) x[j] = u(rng);
            pyr.push_back(ag::constant(x));
            H /= 2;
            W /= 2;
        }
        auto fused = saff.fuse(pyr, false);
        for (int i = 0; i < mc.num_levels; ++i)
            for (size_t j = 0; j < pyr[i]->value.size(); ++j)
                worst = std::max(worst,
                                 std::abs(fused[i]->value[j] - pyr[i]->value[j]));
    }

    // n = 1: no cross-scale paths exist, fuse is the identity
    ModelConfig one;
    one.num_levels = 1;
    one.channels_per_level = {3};
    std::mt19937 init_rng(5);
    SAFF saff1(one, init_rng);
    Tensor x({3, 8, 8}, 0.5);
    auto fused1 = saff1.fuse({ag::constant(x)}, false);
    bool one_ok = true;
    for (size_t j = 0; j < x.size(); ++j)
        if (fused1[0]->value[j] != x[j]) one_ok = false;

    std::ostringstream d;
    d << "max |Xhat - X| = " << worst;
    report(3, "SAFF is an exact identity at w = 0 and for n = 1",
           worst == 0.0 && one_ok, d.str());
}

// ---------------------------------------------------------------- criterion 4
void fusion_oracle() {
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 1 + static_cast<int>(rng() % 3);
        const int H = 2 + static_cast<int>(rng() % 4);
        const int W = 2 + static_cast<int>(rng() % 4);
        std::vector<ag::Var> heads;
        for (int i = 0; i < n; ++i) {
            Tensor h({1, H, W});
            for (size_t j = 0; j < h.size(); ++j) h[j] = u(rng);
            heads.push_back(ag::constant(h));
        }
        Tensor logits({n + 1, H, W});
        for (size_t j = 0; j < logits.size(); ++j) logits[j] = u(rng) - 1.5;
        auto masks = soft_masks(ag::constant(logits));
        auto fused = fuse_density(heads, masks, true);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double ref = 0.0;
                for (int i = 0; i < n; ++i)
                    ref += heads[i]->value(0, y, x) * masks->value(i + 1, y, x);
                worst = std::max(worst, std::abs(fused->value(0, y, x) - ref));
            }
    }

    // worked 2x2 example: D1=[[1,2],[3,4]], D2=[[4,8],[2,0.4]],
    // M1=[[1,0.5],[1,0.8]], M2=[[0,0.5],[0.5,0.2]] (background fills the rest)
    Tensor d1({1, 2, 2}), d2({1, 2, 2}), m({3, 2, 2});
    d1(0, 0, 0) = 1; d1(0, 0, 1) = 2; d1(0, 1, 0) = 3; d1(0, 1, 1) = 4;
    d2(0, 0, 0) = 4; d2(0, 0, 1) = 8; d2(0, 1, 0) = 2; d2(0, 1, 1) = 0.4;
    m(1, 0, 0) = 1.0; m(1, 0, 1) = 0.5; m(1, 1, 0) = 1.0; m(1, 1, 1) = 0.8;
    m(2, 0, 0) = 0.0; m(2, 0, 1) = 0.5; m(2, 1, 0) = 0.5; m(2, 1, 1) = 0.2;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) m(0, y, x) = 1.0 - m(1, y, x) - m(2, y, x);
    auto fused = fuse_density({ag::constant(d1), ag::constant(d2)},
                              ag::constant(m), true);
    const double expected[2][2] = {{1.0, 5.0}, {4.0, 3.28}};
    double worked = 0.0;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x)
            worked = std::max(worked,
                              std::abs(fused->value(0, y, x) - expected[y][x]));

    std::ostringstream d;
    d << "max |fused - loop reference| = " << std::max(worst, worked);
    report(4, "fuse_density matches the explicit-loop reference",
           worst < 1e-9 && worked < 1e-9, d.str());
}

// ---------------------------------------------------------------- criterion 5
void analytic_losses() {
    bool ok = true;
    std::ostringstream d;

    // uniform logits -> CE = ln(n+1)
    for (int n = 1; n <= 4; ++n) {
        Tensor logits({n + 1, 3, 3}, 0.7);
        gt::LevelMaskGT gt_masks;
        gt_masks.labels = Tensor({3, 3}, 1.0);
        auto l = decoupling_loss(ag::constant(logits), gt_masks);
        if (std::abs(l->value(0) - std::log(n + 1.0)) >= 1e-9) {
            ok = false;
            d << "CE(uniform, n=" << n << ") off; ";
        }
    }

    // total loss is exactly l_reg + lambda * l_dec
    auto t = total_loss(0.125, 0.75, 2.0);
    if (t.total != 0.125 + 2.0 * 0.75) {
        ok = false;
        d << "total_loss not exact; ";
    }

    // hand values: gt (10, 20) vs pred (12, 16) -> MAE 3, MSE sqrt(10)
    auto ev = evaluate({{"a", 10.0, 12.0}, {"b", 20.0, 16.0}});
    if (std::abs(ev.mae - 3.0) >= 1e-9 || std::abs(ev.mse - std::sqrt(10.0)) >= 1e-9) {
        ok = false;
        d << "hand MAE/MSE mismatch; ";
    }

    // Jensen: MAE <= MSE on random record sets
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<CountRecord> rs;
        const int n = 1 + static_cast<int>(rng() % 8);
        for (int i = 0; i < n; ++i) rs.push_back({"x", u(rng), u(rng)});
        auto e = evaluate(rs);
        if (e.mae > e.mse + 1e-12) {
            ok = false;
            d << "MAE > MSE; ";
        }
    }
    report(5, "analytic loss values (CE, total, MAE/MSE) and MAE <= MSE", ok,
           d.str());
}

// ---------------------------------------------------------------- criterion 6
void gradient_checks() {
    const double t0 = now_seconds();
    bool ok = true;
    std::ostringstream d;

    // dL_dec/dlogits = (softmax - onehot) / locations
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const int n = 2, H = 4, W = 5;
    Tensor logits({n + 1, H, W});
    for (size_t i = 0; i < logits.size(); ++i) logits[i] = u(rng);
    gt::LevelMaskGT gt_masks;
    gt_masks.labels = Tensor({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            gt_masks.labels(y, x) = static_cast<double>(rng() % (n + 1));
    auto logit_var = ag::leaf(logits);
    ag::backward(decoupling_loss(logit_var, gt_masks));
    auto sm = soft_masks(ag::constant(logits));
    double worst_dec = 0.0;
    for (int c = 0; c <= n; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double onehot =
                    (static_cast<int>(gt_masks.labels(y, x)) == c) ? 1.0 : 0.0;
                const double expect = (sm->value(c, y, x) - onehot) / (H * W);
                worst_dec = std::max(
                    worst_dec, std::abs(logit_var->grad(c, y, x) - expect));
            }
    if (worst_dec >= 1e-6) ok = false;
    d << "max |dL_dec/dlogits - analytic| = " << worst_dec;

    // end-to-end finite differences on 20 sampled parameters
    gt::GTConfig gcfg;
    gcfg.level_thresholds = {0.5};
    Dataset data = make_standard_dataset(42, 1, 16, 16, gcfg, 2, false);
    ModelConfig mc;
    mc.num_levels = 2;
    mc.channels_per_level = {4, 6};
    mc.head_channels = 5;
    HDNet model(mc, 11);
    const Sample& s = data[0];
    auto loss_of = [&] {
        auto fwd = model.forward(s.image, false);
        return ag::add(regression_loss(fwd.final_density, s.target),
                       ag::mul_scalar(decoupling_loss(fwd.logits, s.masks),
                                      mc.lambda_weight));
    };
    ag::backward(loss_of());
    auto params = model.parameters();
    std::mt19937 pick_rng(3);
    std::uniform_int_distribution<size_t> pick(0, params.size() - 1);
    double worst_fd = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        auto& p = params[pick(pick_rng)];
        std::uniform_int_distribution<size_t> elem(0, p.var->value.size() - 1);
        const size_t i = elem(pick_rng);
        const double orig = p.var->value[i];
        const double h = 1e-5;
        p.var->value[i] = orig + h;
        const double fp = loss_of()->value(0);
        p.var->value[i] = orig - h;
        const double fm = loss_of()->value(0);
        p.var->value[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = p.var->grad[i];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
        worst_fd = std::max(worst_fd, std::abs(fd - an) / denom);
    }
    if (worst_fd >= 2e-2) ok = false;
    const double elapsed = now_seconds() - t0;
    if (elapsed >= 300.0) ok = false;
    d << ", worst FD rel err = " << worst_fd << ", " << elapsed << " s";
    report(6, "analytic gradients (decoupling loss + end-to-end FD)", ok, d.str());
}

// ---------------------------------------------------------------- criterion 7
void gradient_interaction() {
    gt::GTConfig gcfg;
    Dataset data = make_standard_dataset(3, 2, 32, 32, gcfg, 2, true);

    ModelConfig soft_cfg;
    soft_cfg.num_levels = 2;
    soft_cfg.channels_per_level = {4, 6};
    soft_cfg.head_channels = 5;
    ModelConfig trunc_cfg = soft_cfg;
    trunc_cfg.use_soft_masks = false;

    double soft_norm = 0.0, trunc_norm = 0.0;
    for (const auto& s : data) {
        HDNet soft_model(soft_cfg, 2);
        HDNet trunc_model(trunc_cfg, 2);
        soft_norm += ddm_grad_norm_from_regression(soft_model, s);
        trunc_norm += ddm_grad_norm_from_regression(trunc_model, s);
    }
    std::ostringstream d;
    d << "soft norm = " << soft_norm << ", truncated norm = " << trunc_norm;
    report(7, "L_reg reaches DDM through soft masks only",
           soft_norm > 1e-12 && trunc_norm == 0.0, d.str());
}

// ------------------------------------------------------ shared standard set
struct StandardSet {
    Dataset train, val;
};

StandardSet& standard_set() {
    static StandardSet s = [] {
        StandardSet out;
        gt::GTConfig gcfg;
        out.train = make_standard_dataset(0, 200, 64, 64, gcfg, 3, true);
        out.val = make_standard_dataset(200, 50, 64, 64, gcfg, 3, false);
        return out;
    }();
    return s;
}

ModelConfig standard_model() {
    ModelConfig mc;
    mc.num_levels = 3;
    mc.channels_per_level = {16, 24, 32};
    mc.head_channels = 16;
    mc.use_saff = true;
    mc.lambda_weight = 1.0;
    return mc;
}

// ---------------------------------------------------------------- criterion 8
void training_sanity() {
    const double t0 = now_seconds();
    auto& ds = standard_set();

    double mean_train = 0.0;
    for (const auto& s : ds.train) mean_train += s.gt_count;
    mean_train /= static_cast<double>(ds.train.size());
    double const_mae = 0.0;
    for (const auto& s : ds.val) const_mae += std::abs(s.gt_count - mean_train);
    const_mae /= static_cast<double>(ds.val.size());

    TrainConfig tc;
    tc.learning_rate = 0.001;
    tc.weight_decay = 0.0005;
    tc.batch_size = 2;
    tc.epochs = 50;

    int beat = 0;
    std::ostringstream d;
    d << "constant-predictor MAE = " << const_mae << "; best val MAE per seed:";
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        tc.seed = seed;
        HDNet model(standard_model(), seed);
        auto r = train(model, tc, ds.train, ds.val, std::nullopt);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& h : r.history) best = std::min(best, h.val_mae);
        d << " " << best;
        if (best < const_mae) ++beat;
    }
    const double elapsed = now_seconds() - t0;
    d << "; " << beat << "/3 beat it, " << elapsed << " s";
    report(8, "training beats the mean-count predictor on the standard set",
           beat >= 2 && elapsed < 1800.0, d.str());
}

// ---------------------------------------------------------------- criterion 9
void determinism() {
#ifndef HDNET_CLI_PATH
    report(9, "deterministic CLI training", false, "CLI path not compiled in");
#else
    const std::string cli = HDNET_CLI_PATH;
    auto base = fs::temp_directory_path() / "hdnet_acceptance" / "determinism";
    fs::remove_all(base);
    fs::create_directories(base);
    auto run = [&](const std::string& args) {
        const std::string cmd =
            cli + " " + args + " > " + (base / "log.txt").string() + " 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    const auto data = base / "data";
    bool ok = run("gen-data --out " + data.string() +
                  " --scenes 8 --size 32x32 --seed 3");
    ok = ok && run("make-gt --data " + data.string() + " --levels 2");

    json cfg{{"schema_version", 1},
             {"model",
              {{"num_levels", 2}, {"channels_per_level", {4, 6}}, {"head_channels", 5}}},
             {"train", {{"epochs", 2}, {"batch_size", 2}, {"seed", 4}, {"num_workers", 1}}},
             {"data", {{"train_dir", data.string()}, {"val_dir", data.string()}}}};
    std::ofstream(base / "config.json") << cfg.dump(2);

    const auto run_a = base / "a", run_b = base / "b";
    ok = ok && run("train --config " + (base / "config.json").string() + " --out " +
                   run_a.string());
    ok = ok && run("train --config " + (base / "config.json").string() + " --out " +
                   run_b.string());

    bool equal = false;
    std::string detail;
    if (ok) {
        auto slurp = [](const fs::path& p) {
            std::ifstream is(p, std::ios::binary);
            std::stringstream ss;
            ss << is.rdbuf();
            return ss.str();
        };
        const bool hist_equal =
            slurp(run_a / "history.jsonl") == slurp(run_b / "history.jsonl");
        const std::string ha = io::sha256_file(run_a / "checkpoint.ckpt");
        const std::string hb = io::sha256_file(run_b / "checkpoint.ckpt");
        equal = hist_equal && ha == hb;
        detail = "histories " + std::string(hist_equal ? "match" : "differ") +
                 ", checkpoint hashes " + (ha == hb ? "match" : "differ");
    } else {
        detail = "a CLI invocation failed";
    }
    report(9, "two identical CLI training runs are bit-reproducible", ok && equal,
           detail);
#endif
}

// --------------------------------------------------------------- criterion 10
void ablation_direction() {
    auto& ds = standard_set();

    TrainConfig tc;
    tc.learning_rate = 0.001;
    tc.weight_decay = 0.0005;
    tc.batch_size = 2;
    tc.epochs = 20;

    ModelConfig fb_fd = standard_model();
    ModelConfig fb = fb_fd;
    fb.num_levels = 1;
    fb.channels_per_level = {8};
    ModelConfig baseline = fb;  // one density head, no decoupling training
    baseline.lambda_weight = 0.0;

    std::vector<uint64_t> seeds{0, 1, 2};
    std::vector<AblationRow> rows{{"baseline", baseline, seeds},
                                  {"fb_decoupling", fb, seeds},
                                  {"fb_fd_decoupling", fb_fd, seeds}};
    bool ok = true;
    std::string note;
    try {
        auto rep = run_ablation_suite(rows, tc, ds.train, ds.val);
        ok = rep.rows.size() == 3 && !rep.ordering_note.empty();
        for (const auto& r : rep.rows)
            if (r.maes.size() != seeds.size()) ok = false;
        note = rep.ordering_note;
        std::cout << ablation_to_table(rep);
    } catch (const std::exception& e) {
        ok = false;
        note = std::string("suite threw: ") + e.what();
    }
    report(10, "ablation suite completes and reports the decoupling ordering", ok,
           note);
}

}  // namespace

int main(int argc, char** argv) {
    // optional single-criterion selector for debugging, e.g. "hdnet_acceptance 8"
    const int only = argc > 1 ? std::atoi(argv[1]) : 0;
    auto want = [&](int c) { return only == 0 || only == c; };
    if (want(1)) count_conservation();
    if (want(2)) softmax_normalization();
    if (want(3)) saff_identity();
    if (want(4)) fusion_oracle();
    if (want(5)) analytic_losses();
    if (want(6)) gradient_checks();
    if (want(7)) gradient_interaction();
    if (want(8)) training_sanity();
    if (want(9)) determinism();
    if (want(10)) ablation_direction();

    std::cout << (g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED")
              << " (" << (10 - g_failures) << "/10)" << std::endl;
    return g_failures == 0 ? 0 : 1;
}
