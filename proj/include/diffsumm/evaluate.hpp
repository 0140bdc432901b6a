#pragma once

#include "diffsumm/dataset.hpp"
#include "diffsumm/diffusion.hpp"
#include "diffsumm/predictor.hpp"
#include "diffsumm/unsupervised.hpp"

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace diffsumm {

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

PrecisionRecall fscore(std::span<const std::uint8_t> pred_mask, std::span<const std::uint8_t> user_mask);

enum class FscoreMode { max_over_users, avg_over_users };

FscoreMode parse_fscore_mode(const std::string& s);
std::string to_string(FscoreMode m);

double fscore_protocol(std::span<const std::uint8_t> pred_mask, const std::vector<FrameMask>& users, FscoreMode mode);

/// Kendall tau-b, O(n log n). NaN when either input is constant.
double kendall_tau(std::span<const double> a, std::span<const double> b);

/// Pearson correlation of average ranks. NaN when either input is constant.
double spearman_rho(std::span<const double> a, std::span<const double> b);

std::vector<double> average_ranks(std::span<const double> v);

/// Mean over the finite entries; NaN when there are none.
double nan_mean(std::span<const double> v);

struct EvalProtocol {
    FscoreMode fscore_mode = FscoreMode::avg_over_users;
    int n_splits = 5;
    bool require_fscore = true;
    double summary_ratio = 0.15;
};

/// Metrics for one scoring (diffusion output or initializer alone).
struct ScoreMetrics {
    double fscore = std::numeric_limits<double>::quiet_NaN();
    double kendall = std::numeric_limits<double>::quiet_NaN();  // vs annotators, averaged
    double spearman = std::numeric_limits<double>::quiet_NaN();
    double kendall_truth = std::numeric_limits<double>::quiet_NaN(); // vs planted truth if present
    double spearman_truth = std::numeric_limits<double>::quiet_NaN();
};

struct VideoEvaluation {
    std::string id;
    RawScores initializer;
    RawScores diffusion;
    std::vector<double> annotation_mean; // for the curve dump only
    ScoreMetrics diffusion_metrics;
    ScoreMetrics initializer_metrics;
};

struct EvalReport {
    std::string split_name;
    std::vector<VideoEvaluation> videos;
    ScoreMetrics diffusion;   // nan-mean across videos
    ScoreMetrics initializer; // the scorer-only ("w/o DDPM") arm
};

struct EvalOptions {
    std::uint64_t seed = 0;
    int jobs = 1;
};

ScoreMetrics score_metrics(const VideoRecord& video, const RawScores& scores, const EvalProtocol& protocol);

EvalReport evaluate_checkpoint(const Dataset& data, const SplitManifest& split, const PredictorParams& params,
                               const ScorerSpec& scorer, const NoiseSchedule& schedule, const EvalProtocol& protocol,
                               const EvalOptions& options = {});

/// Arithmetic mean of per-split aggregates.
ScoreMetrics aggregate_splits(const std::vector<EvalReport>& reports, bool initializer_arm = false);

void write_metrics_table(const std::vector<EvalReport>& reports, std::ostream& out);
void write_metrics_json(const std::vector<EvalReport>& reports, const std::string& effective_config,
                        std::ostream& out);
/// frame, unsup_score, diffusion_score, annotation_mean
void write_score_curve(const VideoEvaluation& v, std::ostream& out);

} // namespace diffsumm
