#include "diffsumm/errors.hpp"
#include "diffsumm/training.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace diffsumm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

PredictorConfig small_predictor(int d_feature) {
    PredictorConfig pc;
    pc.d_model = 16;
    pc.t_embed_dim = 16;
    pc.d_ff = 32;
    pc.n_heads = 2;
    pc.d_feature = d_feature;
    pc.seed = 4;
    return pc;
}

Dataset small_set(int n_videos, int n_annotators, double noise, int frames = 24) {
    SyntheticSpec s;
    s.n_videos = n_videos;
    s.n_annotators = n_annotators;
    s.annotator_noise = noise;
    s.frames_per_video = frames;
    s.n_shots = 4;
    s.d_feature = 8;
    s.seed = 17;
    return generate_synthetic(s);
}

SplitManifest all_train(const Dataset& d) { return {"all", SplitSetting::canonical, d.ids(), {}, 0, 0}; }

} // namespace

TEST_CASE("warmup learning rate") {
    TrainConfig cfg;
    CHECK(lr_at(1, cfg) == doctest::Approx(2e-5).epsilon(1e-12));
    CHECK(lr_at(10, cfg) == 2e-4);
    CHECK(lr_at(55, cfg) == 2e-4);
    double prev = 0.0;
    for (int e = 1; e <= cfg.epochs; ++e) {
        CHECK(lr_at(e, cfg) >= prev);
        prev = lr_at(e, cfg);
    }
    CHECK_THROWS_AS(lr_at(0, cfg), ParameterError);
    CHECK_THROWS_AS(lr_at(101, cfg), ParameterError);
    cfg.warmup_epochs = 0;
    CHECK(lr_at(1, cfg) == 2e-4);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.warmup_epochs = 200;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.t_active = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    auto d = small_set(2, 1, 0.0);
    cfg = {};
    cfg.t_active = 1001;
    CHECK_THROWS_AS(train(d, all_train(d), cfg, small_predictor(8), build_schedule()), ConfigError);
    cfg = {};
    CHECK_THROWS_AS(train(d, SplitManifest{}, cfg, small_predictor(8), build_schedule()), DataError);
    CHECK_THROWS_AS(train(d, all_train(d), cfg, small_predictor(9), build_schedule()), ShapeError);
}

TEST_CASE("forced step with t=1 and zero noise") {
    auto d = small_set(1, 1, 0.0);
    const auto& v = d.videos[0];
    auto params = init_predictor(small_predictor(8));
    params.head.weight.setConstant(0.1); // non-zero output so the loss is informative
    auto opt = make_optimizer(params);
    const auto sched = build_schedule();

    const ScaledScores x0 = scale_scores(v.annotations[0]);
    NoisyScores xt{x0.values, 1};
    for (auto& x : xt.values) x *= std::sqrt(sched.alpha_bar(1));
    const auto eps_hat = predict_noise(params, xt, v.features, 1);
    double expect = 0.0;
    for (double e : eps_hat) expect += e * e;
    expect /= static_cast<double>(eps_hat.size());

    const std::vector<double> zero(v.frame_count(), 0.0);
    const double loss = train_step_with(params, opt, sched, v.features, v.annotations[0], 1, zero, 1e-3);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(opt.step == 1);
    CHECK_THROWS_AS(train_step_with(params, opt, sched, v.features, RawScores{}, 1, {}, 1e-3), DataError);
}

TEST_CASE("one step per annotation per epoch") {
    auto d = small_set(2, 3, 0.1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.warmup_epochs = 1;
    long calls = 0;
    TrainHooks hooks;
    hooks.on_step = [&](long, int, double) { ++calls; };
    auto r = train(d, all_train(d), cfg, small_predictor(8), build_schedule(), {}, hooks);
    CHECK(r.report.steps == 6);
    CHECK(calls == 6);
    REQUIRE(r.report.epochs.size() == 1);
    CHECK(r.report.epochs[0].steps == 6);
    CHECK(r.optimizer.step == 6);
}

TEST_CASE("same seed gives identical checkpoints and losses") {
    auto d = small_set(3, 2, 0.2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.seed = 99;
    cfg.checkpoint_every = 2;
    const auto a = fs::temp_directory_path() / "diffsumm_train_a", b = fs::temp_directory_path() / "diffsumm_train_b";
    fs::remove_all(a);
    fs::remove_all(b);
    std::vector<double> la, lb;
    TrainHooks ha, hb;
    ha.on_step = [&](long, int, double l) { la.push_back(l); };
    hb.on_step = [&](long, int, double l) { lb.push_back(l); };
    train(d, all_train(d), cfg, small_predictor(8), build_schedule(), a, ha);
    train(d, all_train(d), cfg, small_predictor(8), build_schedule(), b, hb);
    CHECK(la == lb);
    CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
    CHECK(fs::exists(a / "checkpoint_epoch_2.bin"));
    CHECK(fs::exists(a / "train_log.txt"));

    cfg.seed = 100;
    std::vector<double> lc;
    TrainHooks hc;
    hc.on_step = [&](long, int, double l) { lc.push_back(l); };
    train(d, all_train(d), cfg, small_predictor(8), build_schedule(), {}, hc);
    CHECK(lc != la);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("train report text") {
    TrainReport r;
    r.epochs = {{1, 0.5, 1e-4, 0.25, 3}, {2, 0.25, 2e-4, 0.25, 3}};
    r.steps = 6;
    r.seed = 8;
    std::ostringstream out;
    write_train_report(r, out);
    const auto s = out.str();
    CHECK(s.rfind("epoch\tmean_loss\tlr\tseconds", 0) == 0);
    CHECK(s.find("[summary]") != std::string::npos);
    CHECK(s.find("steps = 6") != std::string::npos);
}

TEST_CASE("loss halves over 30 epochs on a 5-video synthetic set") {
    SyntheticSpec s;
    s.n_videos = 5;
    s.seed = 1;
    const Dataset d = generate_synthetic(s);
    PredictorConfig pc;
    pc.d_feature = s.d_feature;
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.warmup_epochs = 3; // default warmup scaled with the epoch count
    const auto r = train(d, all_train(d), cfg, pc, build_schedule());
    const double first = r.report.epochs.front().mean_loss;
    const double last = r.report.epochs.back().mean_loss;
    CAPTURE(first);
    CAPTURE(last);
    CHECK(last <= 0.5 * first);
}
