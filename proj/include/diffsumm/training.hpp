#pragma once

#include "diffsumm/dataset.hpp"
#include "diffsumm/diffusion.hpp"
#include "diffsumm/predictor.hpp"

#include <filesystem>
#include <functional>
#include <ostream>
#include <span>

namespace diffsumm {

struct TrainConfig {
    int epochs = 100;
    int warmup_epochs = 10;
    double base_lr = 2e-4;
    double weight_decay = 0.01;
    int t_active = 200;
    std::uint64_t seed = 0;
    int checkpoint_every = 0; // 0: only the final checkpoint
    bool shuffle = true;      // false iterates videos in split order every epoch

    void validate() const;
};

/// Linear warmup to base_lr over warmup_epochs, constant afterwards.
double lr_at(int epoch, const TrainConfig& cfg);

/// One optimization step on one annotation with t and eps drawn from rng.
double train_step(PredictorParams& params, OptimizerState& opt, const NoiseSchedule& schedule,
                  const VideoRecord& video, int annotation_index, Rng& rng, double lr);

/// Same step with t and eps supplied by the caller.
double train_step_with(PredictorParams& params, OptimizerState& opt, const NoiseSchedule& schedule,
                       const FrameFeatures& features, const RawScores& annotation, int t, std::span<const double> eps,
                       double lr);

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
    long steps = 0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    long steps = 0;
    double wall_seconds = 0.0;
    std::filesystem::path final_checkpoint;
    std::uint64_t seed = 0;
};

void write_train_report(const TrainReport& report, std::ostream& out);

struct TrainResult {
    PredictorParams params;
    OptimizerState optimizer;
    TrainReport report;
};

struct TrainHooks {
    std::function<void(long step, int epoch, double loss)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Runs the epoch x video x annotation loop. Writes checkpoint.bin and
/// train_log.txt into out_dir when it is non-empty.
TrainResult train(const Dataset& data, const SplitManifest& split, const TrainConfig& cfg,
                  const PredictorConfig& predictor_cfg, const NoiseSchedule& schedule,
                  const std::filesystem::path& out_dir = {}, const TrainHooks& hooks = {});

} // namespace diffsumm
