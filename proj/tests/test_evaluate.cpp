#include "diffsumm/errors.hpp"
#include "diffsumm/evaluate.hpp"
#include "diffsumm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace diffsumm;

namespace {

// O(n^2) tau-b by direct pair classification.
double tau_pairs(const std::vector<double>& a, const std::vector<double>& b) {
    long long c = 0, d = 0, ta = 0, tb = 0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j], db = b[i] - b[j];
            if (da == 0) ++ta;
            if (db == 0) ++tb;
            if (da != 0 && db != 0) (da * db > 0 ? c : d)++;
        }
    const double n0 = double(n) * double(n - 1) / 2.0;
    const double denom = std::sqrt((n0 - ta) * (n0 - tb));
    return denom == 0.0 ? std::nan("") : double(c - d) / denom;
}

std::vector<double> random_vec(Rng& rng, int n, int levels) {
    std::vector<double> v(n);
    for (auto& x : v) x = levels > 0 ? rng.uniform_int(0, levels - 1) : rng.normal();
    return v;
}

} // namespace

TEST_CASE("fscore hand cases") {
    std::vector<std::uint8_t> pred{1, 1, 0, 0}, user{1, 0, 1, 0};
    auto r = fscore(pred, user);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == 0.5);

    CHECK(fscore(pred, pred).f1 == 1.0);
    std::vector<std::uint8_t> zero(4, 0);
    auto z = fscore(zero, user);
    CHECK(z.precision == 0.0);
    CHECK(z.recall == 0.0);
    CHECK(z.f1 == 0.0);
    CHECK(fscore(user, zero).f1 == 0.0);

    // 3 overlap of 4 predicted and 6 user frames
    std::vector<std::uint8_t> p2{1, 1, 1, 1, 0, 0, 0, 0}, u2{0, 1, 1, 1, 1, 1, 1, 0};
    auto r2 = fscore(p2, u2);
    CHECK(r2.precision == 0.75);
    CHECK(r2.recall == 0.5);
    CHECK(r2.f1 == 0.6);
    auto swapped = fscore(u2, p2);
    CHECK(swapped.precision == r2.recall);
    CHECK(swapped.f1 == r2.f1);

    CHECK_THROWS_AS(fscore(pred, std::vector<std::uint8_t>{1, 0}), ShapeError);
}

TEST_CASE("fscore protocol modes") {
    std::vector<std::uint8_t> pred{1, 1, 0, 0};
    std::vector<FrameMask> users{{1, 1, 0, 0}, {0, 0, 1, 1}};
    CHECK(fscore_protocol(pred, users, FscoreMode::max_over_users) == 1.0);
    CHECK(fscore_protocol(pred, users, FscoreMode::avg_over_users) == 0.5);

    std::vector<FrameMask> one{{1, 0, 1, 0}};
    CHECK(fscore_protocol(pred, one, FscoreMode::max_over_users) == fscore(pred, one[0]).f1);
    CHECK(fscore_protocol(pred, one, FscoreMode::avg_over_users) == fscore(pred, one[0]).f1);

    // hand counts: f1 = 0.8, 0.5, 0
    std::vector<std::uint8_t> p{1, 1, 1, 0, 0, 0};
    std::vector<FrameMask> three{{1, 1, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0}, {0, 0, 0, 1, 1, 1}};
    CHECK(fscore(p, three[0]).f1 == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(fscore(p, three[1]).f1 == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(fscore_protocol(p, three, FscoreMode::avg_over_users) == doctest::Approx(1.3 / 3.0).epsilon(1e-15));

    CHECK_THROWS_AS(fscore_protocol(p, {}, FscoreMode::max_over_users), DataError);
    CHECK(parse_fscore_mode("max") == FscoreMode::max_over_users);
    CHECK(to_string(parse_fscore_mode("avg")) == "avg");
    CHECK_THROWS_AS(parse_fscore_mode("median"), ConfigError);
}

TEST_CASE("kendall tau-b examples") {
    std::vector<double> a{1, 2, 3, 4}, r{4, 3, 2, 1};
    CHECK(kendall_tau(a, a) == 1.0);
    CHECK(kendall_tau(a, r) == -1.0);
    // pair-count oracle: C=5, D=0, one tie in the first vector
    CHECK(kendall_tau(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 3, 2, 4}) ==
          doctest::Approx(0.9128709291752769).epsilon(1e-14));
    CHECK(std::isnan(kendall_tau(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3})));
    CHECK(std::isnan(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0})));
    CHECK_THROWS_AS(kendall_tau(std::vector<double>{1}, std::vector<double>{1}), ShapeError);
    CHECK_THROWS_AS(kendall_tau(a, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("kendall tau-b matches pair counting") {
    Rng rng(21);
    for (int rep = 0; rep < 500; ++rep) {
        const int n = rng.uniform_int(2, 200);
        const int levels = rep % 3 == 0 ? 0 : rng.uniform_int(2, 8);
        auto a = random_vec(rng, n, levels), b = random_vec(rng, n, rep % 5 == 0 ? 0 : levels);
        const double fast = kendall_tau(a, b), slow = tau_pairs(a, b);
        if (std::isnan(slow)) CHECK(std::isnan(fast));
        else CHECK(std::abs(fast - slow) < 1e-12);
    }
}

TEST_CASE("spearman rho") {
    std::vector<double> a{1, 2, 3, 4}, r{4, 3, 2, 1};
    CHECK(spearman_rho(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(spearman_rho(a, r) == doctest::Approx(-1.0).epsilon(1e-15));
    // ranks (1, 2.5, 2.5, 4) and (1, 3, 2, 4): Pearson = 4.5 / sqrt(4.5 * 5)
    CHECK(spearman_rho(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 3, 2, 4}) ==
          doctest::Approx(0.9486832980505139).epsilon(1e-14));
    CHECK(average_ranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
    CHECK(std::isnan(spearman_rho(std::vector<double>{1, 1}, std::vector<double>{1, 2})));
}

TEST_CASE("correlations are invariant under increasing transforms") {
    Rng rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        auto a = random_vec(rng, 50, rep % 2 ? 5 : 0), b = random_vec(rng, 50, 0);
        std::vector<double> ta(a);
        for (auto& x : ta) x = std::exp(x) * 3.0 + 1.0;
        CHECK(kendall_tau(ta, b) == doctest::Approx(kendall_tau(a, b)).epsilon(1e-12));
        CHECK(spearman_rho(ta, b) == doctest::Approx(spearman_rho(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("nan_mean skips undefined entries") {
    std::vector<double> v{1.0, std::nan(""), 3.0};
    CHECK(nan_mean(v) == 2.0);
    CHECK(std::isnan(nan_mean(std::vector<double>{std::nan("")})));
}

namespace {

Dataset tiny_dataset() {
    SyntheticSpec spec;
    spec.n_videos = 4;
    spec.frames_per_video = 40;
    spec.d_feature = 8;
    spec.n_annotators = 3;
    spec.n_shots = 5;
    spec.seed = 9;
    return generate_synthetic(spec);
}

} // namespace

TEST_CASE("oracle scorer with no denoising reproduces the annotation") {
    auto data = tiny_dataset();
    PredictorConfig pc;
    pc.d_model = 8;
    pc.d_ff = 16;
    pc.n_heads = 2;
    pc.t_embed_dim = 8;
    pc.d_feature = data.d_feature;
    auto params = init_predictor(pc);
    SplitManifest split{"s", SplitSetting::canonical, {}, data.ids(), 0, 0};
    auto report = evaluate_checkpoint(data, split, params, parse_scorer("oracle:1"), build_schedule().with_active(0),
                                      EvalProtocol{});
    REQUIRE(report.videos.size() == 4);
    for (std::size_t i = 0; i < report.videos.size(); ++i) {
        const auto& v = report.videos[i];
        CHECK(v.diffusion.values == data.videos[i].annotations[1].values);
        CHECK(kendall_tau(v.diffusion.values, data.videos[i].annotations[1].values) == doctest::Approx(1.0));
        CHECK(spearman_rho(v.diffusion.values, data.videos[i].annotations[1].values) == doctest::Approx(1.0));
    }
}

TEST_CASE("evaluation is deterministic and independent of the job count") {
    auto data = tiny_dataset();
    PredictorConfig pc;
    pc.d_model = 8;
    pc.d_ff = 16;
    pc.n_heads = 2;
    pc.t_embed_dim = 8;
    pc.d_feature = data.d_feature;
    pc.seed = 3;
    auto params = init_predictor(pc);
    // give the zero head something to say so the chain actually moves
    params.head.weight.setConstant(0.05);
    SplitManifest split{"s", SplitSetting::canonical, {}, data.ids(), 0, 0};
    auto sched = build_schedule().with_active(20);
    auto run = [&](int jobs) {
        auto rep = evaluate_checkpoint(data, split, params, parse_scorer("repdiv"), sched, EvalProtocol{},
                                       EvalOptions{7, jobs});
        std::ostringstream out;
        write_metrics_json({rep}, "cfg", out);
        return out.str();
    };
    const std::string once = run(1);
    CHECK(once == run(1));
    CHECK(once == run(3));
}

TEST_CASE("missing user summaries are an error only when F-score is required") {
    auto data = tiny_dataset();
    for (auto& v : data.videos) v.user_summaries.reset();
    EvalProtocol protocol;
    CHECK_THROWS_AS(score_metrics(data.videos[0], data.videos[0].annotations[0], protocol), DataError);
    protocol.require_fscore = false;
    auto m = score_metrics(data.videos[0], data.videos[0].annotations[0], protocol);
    CHECK(std::isnan(m.fscore));
    CHECK(std::isfinite(m.kendall));
}

TEST_CASE("multi-split aggregate is the mean of split aggregates") {
    EvalReport a, b;
    a.diffusion.fscore = 0.2;
    b.diffusion.fscore = 0.4;
    a.initializer.kendall = 0.1;
    b.initializer.kendall = std::nan("");
    CHECK(aggregate_splits({a, b}).fscore == doctest::Approx(0.3));
    CHECK(aggregate_splits({a, b}, true).kendall == doctest::Approx(0.1));

    std::ostringstream table;
    write_metrics_table({a, b}, table);
    CHECK(table.str().find("w/o-ddpm") != std::string::npos);
}

TEST_CASE("score curve dump") {
    VideoEvaluation v;
    v.initializer = {{0.5, 0.25}};
    v.diffusion = {{0.75, 1.0}};
    v.annotation_mean = {0.5, 0.5};
    std::ostringstream out;
    write_score_curve(v, out);
    CHECK(out.str() == "frame\tunsup_score\tdiffusion_score\tannotation_mean\n0\t0.5\t0.75\t0.5\n1\t0.25\t1\t0.5\n");
}
