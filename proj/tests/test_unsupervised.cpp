#include "diffsumm/errors.hpp"
#include "diffsumm/unsupervised.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace diffsumm;
namespace fs = std::filesystem;

namespace {

VideoRecord record(FrameFeatures f) {
    VideoRecord v;
    v.id = "v";
    const int n = static_cast<int>(f.rows());
    v.features = std::move(f);
    v.annotations = {{std::vector<double>(n, 0.25)}, {std::vector<double>(n, 0.75)}};
    v.change_points.shots = {{0, n}};
    v.n_frames_original = n;
    return v;
}

// 17 frames near one direction, three rare frames near another.
FrameFeatures rare_cluster() {
    FrameFeatures f(20, 3);
    for (int i = 0; i < 20; ++i) {
        const double e = 0.01 * ((i * 7) % 5);
        if (i == 4 || i == 11 || i == 17) f.row(i) << 0.0, 1.0, e;
        else f.row(i) << 1.0, e, 0.1;
    }
    return f;
}

} // namespace

TEST_CASE("scorer spec parsing") {
    CHECK(parse_scorer("repdiv").kind == ScorerKind::repdiv_baseline);
    CHECK(parse_scorer("repdiv:2.5").bandwidth == 2.5);
    CHECK(parse_scorer("constant:0.25").constant == 0.25);
    CHECK(parse_scorer("oracle:3").annotation_index == 3);
    CHECK(parse_scorer("file:/tmp/x").directory == fs::path("/tmp/x"));
    for (const char* s : {"repdiv", "constant:0.25", "oracle:3", "file:/tmp/x"})
        CHECK(to_string(parse_scorer(s)) == s);
    CHECK_THROWS_AS(parse_scorer("constant:1.5"), ConfigError);
    CHECK_THROWS_AS(parse_scorer("oracle:-1"), ConfigError);
    CHECK_THROWS_AS(parse_scorer("dr-dsn"), ConfigError);
    CHECK_THROWS_AS(parse_scorer("file:"), ConfigError);
}

TEST_CASE("constant and oracle scorers") {
    auto v = record(FrameFeatures::Ones(4, 2));
    CHECK(score_video(parse_scorer("constant:0.5"), v).values == std::vector<double>{0.5, 0.5, 0.5, 0.5});
    CHECK(score_video(parse_scorer("oracle:1"), v).values == v.annotations[1].values);
    CHECK_THROWS_AS(score_video(parse_scorer("oracle:2"), v), DataError);
}

TEST_CASE("repdiv on identical frames is flat at one half") {
    auto v = record(FrameFeatures::Constant(30, 4, 0.3));
    auto s = score_video(parse_scorer("repdiv"), v);
    CHECK(s.values == std::vector<double>(30, 0.5));
}

TEST_CASE("repdiv uniqueness singles out a rare cluster") {
    auto parts = repdiv_scores(rare_cluster());
    // direct windowed-cosine computation
    CHECK(parts.uniqueness[4] == doctest::Approx(0.9080539439162129).epsilon(1e-12));
    CHECK(parts.uniqueness[11] == doctest::Approx(0.8700095517705037).epsilon(1e-12));
    CHECK(parts.uniqueness[17] == doctest::Approx(0.8948200721897079).epsilon(1e-12));
    CHECK(parts.uniqueness[0] == doctest::Approx(0.09995386811193163).epsilon(1e-12));
    double common_max = 0.0;
    for (int i = 0; i < 20; ++i)
        if (i != 4 && i != 11 && i != 17) common_max = std::max(common_max, parts.uniqueness[i]);
    for (int i : {4, 11, 17}) CHECK(parts.uniqueness[i] > common_max);
}

TEST_CASE("repdiv output is in range, deterministic and seed-driven") {
    FrameFeatures f(90, 6);
    for (int i = 0; i < 90; ++i)
        for (int c = 0; c < 6; ++c) f(i, c) = std::sin(0.37 * i * (c + 1)) + 0.1 * c;
    auto a = repdiv_scores(f, 0.0, 10, 1);
    CHECK(a.score == repdiv_scores(f, 0.0, 10, 1).score);
    REQUIRE(a.score.size() == 90);
    double lo = 1.0, hi = 0.0;
    for (double s : a.score) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
    CHECK_THROWS_AS(repdiv_scores(FrameFeatures(0, 3)), DataError);
}

TEST_CASE("minmax normalization") {
    CHECK(minmax_normalize({2, 4, 3}) == std::vector<double>{0, 1, 0.5});
    CHECK(minmax_normalize({7, 7}) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("score files roundtrip at f32 precision") {
    const auto dir = fs::temp_directory_path() / "diffsumm_test_scores";
    fs::remove_all(dir);
    fs::create_directories(dir);
    RawScores s{{0.0, 1.0 / 3.0, 0.123456789, 1.0}};
    write_score_file(dir / "v.txt", "v", s);
    std::string id;
    auto back = read_score_file(dir / "v.txt", &id);
    CHECK(id == "v");
    REQUIRE(back.values.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(static_cast<float>(back.values[i]) == static_cast<float>(s.values[i]));

    auto v = record(FrameFeatures::Ones(4, 2));
    CHECK(score_video(parse_scorer("file:" + dir.string()), v).values == back.values);

    auto short_video = record(FrameFeatures::Ones(3, 2));
    CHECK_THROWS_AS(score_video(parse_scorer("file:" + dir.string()), short_video), ShapeError);

    std::ofstream(dir / "bad.txt") << "bad 2\n0.5\n1.5\n";
    CHECK_THROWS_AS(read_score_file(dir / "bad.txt"), DomainError);
    fs::remove_all(dir);
}
