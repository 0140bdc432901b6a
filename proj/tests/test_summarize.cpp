#include "diffsumm/errors.hpp"
#include "diffsumm/rng.hpp"
#include "diffsumm/summarize.hpp"

#include <doctest.h>

#include <numeric>
#include <sstream>

using namespace diffsumm;

namespace {

ShotSegmentation segments(std::initializer_list<int> lengths) {
    ShotSegmentation seg;
    int at = 0;
    for (int len : lengths) {
        seg.shots.push_back({at, at + len});
        at += len;
    }
    return seg;
}

struct Brute {
    double value = -1.0;
    std::vector<std::uint8_t> pick;
};

// Enumerates subsets so that, among equal values, the first one visited in
// lexicographic order (shot 0 taken before not taken) is kept.
Brute exhaustive(const std::vector<double>& v, const std::vector<int>& len, int budget) {
    const std::size_t k = v.size();
    Brute best;
    for (std::uint32_t m = 0; m < (1u << k); ++m) {
        std::vector<std::uint8_t> pick(k);
        double value = 0.0;
        int used = 0;
        for (std::size_t i = 0; i < k; ++i) {
            // bit k-1-i set means "skip shot i", so m = 0 takes everything
            pick[i] = ((m >> (k - 1 - i)) & 1u) ? 0 : 1;
            if (pick[i]) {
                value += v[i];
                used += len[i];
            }
        }
        if (used > budget) continue;
        if (value > best.value) best = {value, pick};
    }
    return best;
}

} // namespace

TEST_CASE("shot_scores averages within each shot") {
    CHECK(shot_scores({{1, 1, 0, 0}}, segments({2, 2})) == std::vector<double>{1.0, 0.0});
    CHECK(shot_scores({{0.2, 0.4, 0.9}}, segments({3}))[0] == doctest::Approx(0.5).epsilon(1e-15));

    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> x(40);
        for (auto& v : x) v = rng.uniform();
        auto seg = segments({5, 11, 1, 23});
        auto s = shot_scores({x}, seg);
        for (std::size_t i = 0; i < seg.shots.size(); ++i) {
            double sum = 0.0;
            for (int f = seg.shots[i].start; f < seg.shots[i].end; ++f) sum += x[f];
            CHECK(std::abs(s[i] - sum / seg.shots[i].length()) < 1e-12);
        }
    }
}

TEST_CASE("segmentation must partition the video") {
    CHECK_THROWS_AS(shot_scores({{1, 1, 0}}, segments({2, 2})), DataError);
    ShotSegmentation overlap{{{0, 3}, {2, 4}}};
    CHECK_THROWS_AS(overlap.validate(4), DataError);
    ShotSegmentation gap{{{0, 1}, {2, 4}}};
    CHECK_THROWS_AS(gap.validate(4), DataError);
    ShotSegmentation empty_shot{{{0, 0}, {0, 4}}};
    CHECK_THROWS_AS(empty_shot.validate(4), DataError);
    CHECK_NOTHROW(segments({1, 3}).validate(4));
}

TEST_CASE("knapsack small cases") {
    std::vector<double> v{0.9, 0.6, 0.8};
    std::vector<int> len{4, 3, 5};
    auto sel = knapsack_select(v, len, 8);
    CHECK(sel.selected == std::vector<std::uint8_t>{1, 1, 0});
    CHECK(sel.total_value == doctest::Approx(1.5).epsilon(1e-15));

    auto none = knapsack_select(v, len, 0);
    CHECK(none.selected == std::vector<std::uint8_t>{0, 0, 0});
    CHECK(none.total_value == 0.0);

    auto all = knapsack_select(v, len, 12);
    CHECK(all.selected == std::vector<std::uint8_t>{1, 1, 1});

    CHECK_THROWS_AS(knapsack_select(v, std::vector<int>{4, -1, 5}, 8), ParameterError);
    CHECK_THROWS_AS(knapsack_select(v, std::vector<int>{4, 3}, 8), ShapeError);
    CHECK_THROWS_AS(knapsack_select(v, len, -1), ParameterError);
}

TEST_CASE("equal scores over equal shots pick the earliest half") {
    auto sel = summarize_video({{0.3, 0.3, 0.3, 0.3}}, segments({1, 1, 1, 1}), 0.5);
    CHECK(sel.budget_frames == 2);
    CHECK(sel.selected == std::vector<std::uint8_t>{1, 1, 0, 0});
    CHECK(sel.frame_mask == std::vector<std::uint8_t>{1, 1, 0, 0});
}

TEST_CASE("knapsack matches exhaustive enumeration") {
    Rng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        const int k = rng.uniform_int(1, 15);
        std::vector<double> v(k);
        std::vector<int> len(k);
        // quantized values make exact ties common, which exercises the tie rule
        const bool quantized = rep % 2 == 0;
        for (int i = 0; i < k; ++i) {
            v[i] = quantized ? rng.uniform_int(0, 4) / 4.0 : rng.uniform();
            len[i] = rng.uniform_int(1, 12);
        }
        const int total = std::accumulate(len.begin(), len.end(), 0);
        const int budget = rng.uniform_int(0, total);
        auto sel = knapsack_select(v, len, budget);
        auto ref = exhaustive(v, len, budget);
        CHECK(std::abs(sel.total_value - ref.value) < 1e-12);
        if (quantized) CHECK(sel.selected == ref.pick);

        int used = 0;
        for (int i = 0; i < k; ++i) used += sel.selected[i] * len[i];
        CHECK(used <= budget);
    }
}

TEST_CASE("larger budget never lowers the value") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> v(10);
        std::vector<int> len(10);
        for (int i = 0; i < 10; ++i) {
            v[i] = rng.uniform();
            len[i] = rng.uniform_int(1, 9);
        }
        double prev = 0.0;
        for (int b = 0; b <= 60; b += 3) {
            auto s = knapsack_select(v, len, b);
            CHECK(s.total_value >= prev - 1e-15);
            prev = s.total_value;
        }
    }
}

TEST_CASE("positive affine rescaling leaves the selection unchanged") {
    Rng rng(8);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> v(9);
        std::vector<int> len(9);
        for (int i = 0; i < 9; ++i) {
            v[i] = rng.uniform_int(0, 8) / 8.0;
            len[i] = 4; // fixed lengths: the optimum is the top-k set
        }
        std::vector<double> w(v);
        for (auto& x : w) x = 2.0 * x + 0.5;
        CHECK(knapsack_select(v, len, 13).selected == knapsack_select(w, len, 13).selected);
    }
}

TEST_CASE("summarize_video budget and mask") {
    Rng rng(2);
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = rng.uniform_int(10, 200);
        std::vector<double> x(n);
        for (auto& v : x) v = rng.uniform();
        ShotSegmentation seg;
        int at = 0;
        while (at < n) {
            int end = std::min(n, at + rng.uniform_int(1, 30));
            seg.shots.push_back({at, end});
            at = end;
        }
        auto sel = summarize_video({x}, seg);
        CHECK(sel.budget_frames == static_cast<int>(std::floor(0.15 * n)));
        int frames = std::accumulate(sel.frame_mask.begin(), sel.frame_mask.end(), 0);
        int lengths = 0;
        for (std::size_t i = 0; i < seg.shots.size(); ++i) lengths += sel.selected[i] * seg.shots[i].length();
        CHECK(frames == lengths);
        CHECK(frames <= sel.budget_frames);
    }
}

TEST_CASE("summary dump") {
    auto seg = segments({2, 3, 5});
    auto sel = summarize_video({{0, 0, 1, 1, 1, 0, 0, 0, 0, 0}}, seg, 0.3);
    std::ostringstream out;
    write_summary(out, "v1", seg, sel);
    const std::string s = out.str();
    CHECK(s.find("v1") != std::string::npos);
    CHECK(s.find("0x2 1x3 0x5") != std::string::npos);
}
