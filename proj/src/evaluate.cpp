#include "diffsumm/evaluate.hpp"

#include "diffsumm/errors.hpp"
#include "diffsumm/parallel.hpp"
#include "diffsumm/summarize.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffsumm {

PrecisionRecall fscore(std::span<const std::uint8_t> pred_mask, std::span<const std::uint8_t> user_mask) {
    if (pred_mask.size() != user_mask.size())
        throw ShapeError("fscore: mask lengths " + std::to_string(pred_mask.size()) + " vs " +
                         std::to_string(user_mask.size()));
    long overlap = 0, pred = 0, user = 0;
    for (std::size_t i = 0; i < pred_mask.size(); ++i) {
        const bool p = pred_mask[i] != 0, u = user_mask[i] != 0;
        overlap += p && u;
        pred += p;
        user += u;
    }
    PrecisionRecall r;
    r.precision = pred > 0 ? double(overlap) / pred : 0.0;
    r.recall = user > 0 ? double(overlap) / user : 0.0;
    const double sum = r.precision + r.recall;
    r.f1 = sum > 0.0 ? 2.0 * r.precision * r.recall / sum : 0.0;
    return r;
}

FscoreMode parse_fscore_mode(const std::string& s) {
    if (s == "max") return FscoreMode::max_over_users;
    if (s == "avg") return FscoreMode::avg_over_users;
    throw ConfigError("unknown F-score mode '" + s + "' (expected max or avg)");
}

std::string to_string(FscoreMode m) { return m == FscoreMode::max_over_users ? "max" : "avg"; }

double fscore_protocol(std::span<const std::uint8_t> pred_mask, const std::vector<FrameMask>& users, FscoreMode mode) {
    if (users.empty()) throw DataError("fscore_protocol: no user summaries");
    double best = 0.0, sum = 0.0;
    for (const auto& u : users) {
        const double f = fscore(pred_mask, u).f1;
        best = std::max(best, f);
        sum += f;
    }
    return mode == FscoreMode::max_over_users ? best : sum / static_cast<double>(users.size());
}

namespace {

// Merge sort on `v` returning the number of inversions (strict).
long long count_swaps(std::vector<double>& v, std::vector<double>& tmp, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    long long swaps = count_swaps(v, tmp, lo, mid) + count_swaps(v, tmp, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<long long>(mid - i);
            tmp[k++] = v[j++];
        } else {
            tmp[k++] = v[i++];
        }
    }
    while (i < mid) tmp[k++] = v[i++];
    while (j < hi) tmp[k++] = v[j++];
    std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    return swaps;
}

void require_pair(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size())
        throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    if (a.size() < 2) throw ShapeError(std::string(what) + ": need at least two values");
}

} // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
    require_pair(a, b, "kendall_tau");
    const std::size_t n = a.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
    });

    auto tie_pairs = [](long long run) { return run * (run - 1) / 2; };
    long long ties_a = 0, ties_ab = 0;
    long long run_a = 1, run_ab = 1;
    for (std::size_t k = 1; k < n; ++k) {
        const auto i = order[k - 1], j = order[k];
        if (a[i] == a[j]) {
            ++run_a;
            if (b[i] == b[j]) ++run_ab;
            else {
                ties_ab += tie_pairs(run_ab);
                run_ab = 1;
            }
        } else {
            ties_a += tie_pairs(run_a);
            ties_ab += tie_pairs(run_ab);
            run_a = run_ab = 1;
        }
    }
    ties_a += tie_pairs(run_a);
    ties_ab += tie_pairs(run_ab);

    std::vector<double> sorted_b(n), tmp(n);
    for (std::size_t k = 0; k < n; ++k) sorted_b[k] = b[order[k]];
    const long long swaps = count_swaps(sorted_b, tmp, 0, n);

    long long ties_b = 0, run_b = 1;
    for (std::size_t k = 1; k < n; ++k) {
        if (sorted_b[k] == sorted_b[k - 1]) ++run_b;
        else {
            ties_b += tie_pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += tie_pairs(run_b);

    const long long total = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
    const double denom = std::sqrt(double(total - ties_a) * double(total - ties_b));
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    // concordant - discordant = total - ties_a - ties_b + ties_ab - 2 * discordant
    return double(total - ties_a - ties_b + ties_ab - 2 * swaps) / denom;
}

std::vector<double> average_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
    require_pair(a, b, "spearman_rho");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(ra.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

double nan_mean(std::span<const double> v) {
    double sum = 0.0;
    int count = 0;
    for (double x : v)
        if (std::isfinite(x)) {
            sum += x;
            ++count;
        }
    return count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
}

ScoreMetrics score_metrics(const VideoRecord& video, const RawScores& scores, const EvalProtocol& protocol) {
    ScoreMetrics m;
    if (video.user_summaries && !video.user_summaries->empty()) {
        const SummarySelection sel = summarize_video(scores, video.change_points, protocol.summary_ratio);
        m.fscore = fscore_protocol(sel.frame_mask, *video.user_summaries, protocol.fscore_mode);
    } else if (protocol.require_fscore) {
        throw DataError("video '" + video.id + "' has no user summaries but F-score was requested");
    }
    if (scores.values.size() >= 2) {
        std::vector<double> taus, rhos;
        for (const auto& a : video.annotations) {
            taus.push_back(kendall_tau(scores.values, a.values));
            rhos.push_back(spearman_rho(scores.values, a.values));
        }
        m.kendall = nan_mean(taus);
        m.spearman = nan_mean(rhos);
        if (video.planted_truth) {
            m.kendall_truth = kendall_tau(scores.values, *video.planted_truth);
            m.spearman_truth = spearman_rho(scores.values, *video.planted_truth);
        }
    }
    return m;
}

namespace {

ScoreMetrics mean_metrics(const std::vector<ScoreMetrics>& ms) {
    auto col = [&](double ScoreMetrics::*f) {
        std::vector<double> v;
        for (const auto& m : ms) v.push_back(m.*f);
        return nan_mean(v);
    };
    return {col(&ScoreMetrics::fscore), col(&ScoreMetrics::kendall), col(&ScoreMetrics::spearman),
            col(&ScoreMetrics::kendall_truth), col(&ScoreMetrics::spearman_truth)};
}

} // namespace

EvalReport evaluate_checkpoint(const Dataset& data, const SplitManifest& split, const PredictorParams& params,
                               const ScorerSpec& scorer, const NoiseSchedule& schedule, const EvalProtocol& protocol,
                               const EvalOptions& options) {
    if (split.test_ids.empty()) throw DataError("split '" + split.name + "' has an empty test set");
    if (params.config.d_feature != data.d_feature)
        throw ShapeError("checkpoint d_feature " + std::to_string(params.config.d_feature) + " vs dataset " +
                         std::to_string(data.d_feature));
    std::vector<const VideoRecord*> videos;
    for (const auto& id : split.test_ids) videos.push_back(&data.video(id));

    const NoisePredictor predictor = [&params](const NoisyScores& x, const FrameFeatures& f, int t) {
        return predict_noise(params, x, f, t);
    };

    EvalReport report;
    report.split_name = split.name;
    report.videos.resize(videos.size());
    parallel_for(videos.size(), options.jobs, [&](std::size_t i) {
        const VideoRecord& v = *videos[i];
        VideoEvaluation& out = report.videos[i];
        out.id = v.id;
        out.initializer = score_video(scorer, v);
        Rng rng(video_seed(options.seed, v.id));
        out.diffusion = generate_scores(schedule, predictor, v.features, out.initializer, rng);
        out.annotation_mean.assign(v.frame_count(), 0.0);
        for (const auto& a : v.annotations)
            for (int f = 0; f < v.frame_count(); ++f) out.annotation_mean[f] += a.values[f] / v.annotations.size();
        out.diffusion_metrics = score_metrics(v, out.diffusion, protocol);
        out.initializer_metrics = score_metrics(v, out.initializer, protocol);
    });

    std::vector<ScoreMetrics> diff, init;
    for (const auto& v : report.videos) {
        diff.push_back(v.diffusion_metrics);
        init.push_back(v.initializer_metrics);
    }
    report.diffusion = mean_metrics(diff);
    report.initializer = mean_metrics(init);
    return report;
}

ScoreMetrics aggregate_splits(const std::vector<EvalReport>& reports, bool initializer_arm) {
    std::vector<ScoreMetrics> ms;
    for (const auto& r : reports) ms.push_back(initializer_arm ? r.initializer : r.diffusion);
    return mean_metrics(ms);
}

namespace {

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : "nan"; }

nlohmann::json metrics_json(const ScoreMetrics& m) {
    auto val = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    return {{"fscore", val(m.fscore)},
            {"kendall_tau", val(m.kendall)},
            {"spearman_rho", val(m.spearman)},
            {"kendall_tau_truth", val(m.kendall_truth)},
            {"spearman_rho_truth", val(m.spearman_truth)}};
}

} // namespace

void write_metrics_table(const std::vector<EvalReport>& reports, std::ostream& out) {
    out << fmt::format("{:<16} {:<12} {:>9} {:>9} {:>9} {:>9} {:>9}\n", "split", "arm", "F-score", "tau", "rho",
                       "tau_gt", "rho_gt");
    auto row = [&](const std::string& split, const char* arm, const ScoreMetrics& m) {
        out << fmt::format("{:<16} {:<12} {:>9} {:>9} {:>9} {:>9} {:>9}\n", split, arm, num(m.fscore),
                           num(m.kendall), num(m.spearman), num(m.kendall_truth), num(m.spearman_truth));
    };
    for (const auto& r : reports) {
        row(r.split_name, "diffusion", r.diffusion);
        row(r.split_name, "w/o-ddpm", r.initializer);
    }
    row("mean", "diffusion", aggregate_splits(reports));
    row("mean", "w/o-ddpm", aggregate_splits(reports, true));
}

void write_metrics_json(const std::vector<EvalReport>& reports, const std::string& effective_config,
                        std::ostream& out) {
    nlohmann::json j;
    j["config"] = effective_config;
    j["aggregate"] = {{"diffusion", metrics_json(aggregate_splits(reports))},
                      {"initializer_only", metrics_json(aggregate_splits(reports, true))}};
    nlohmann::json splits = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json videos = nlohmann::json::array();
        for (const auto& v : r.videos)
            videos.push_back({{"id", v.id},
                              {"diffusion", metrics_json(v.diffusion_metrics)},
                              {"initializer_only", metrics_json(v.initializer_metrics)}});
        splits.push_back({{"name", r.split_name},
                          {"diffusion", metrics_json(r.diffusion)},
                          {"initializer_only", metrics_json(r.initializer)},
                          {"videos", std::move(videos)}});
    }
    j["splits"] = std::move(splits);
    out << j.dump(2) << '\n';
}

void write_score_curve(const VideoEvaluation& v, std::ostream& out) {
    out << "frame\tunsup_score\tdiffusion_score\tannotation_mean\n";
    for (std::size_t i = 0; i < v.diffusion.values.size(); ++i)
        out << fmt::format("{}\t{:.9g}\t{:.9g}\t{:.9g}\n", i, v.initializer.values[i], v.diffusion.values[i],
                           v.annotation_mean[i]);
}

} // namespace diffsumm
