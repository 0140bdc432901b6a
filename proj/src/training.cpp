#include "diffsumm/training.hpp"

#include "diffsumm/errors.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>

namespace diffsumm {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs > epochs) throw ConfigError("train.warmup_epochs must lie in [0, epochs]");
    if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (t_active < 1) throw ConfigError("train.t_active must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 1 || epoch > cfg.epochs)
        throw ParameterError("epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(cfg.epochs) + "]");
    if (epoch <= cfg.warmup_epochs) return cfg.base_lr * epoch / cfg.warmup_epochs;
    return cfg.base_lr;
}

double train_step_with(PredictorParams& params, OptimizerState& opt, const NoiseSchedule& schedule,
                       const FrameFeatures& features, const RawScores& annotation, int t, std::span<const double> eps,
                       double lr) {
    if (annotation.values.empty()) throw DataError("train_step: empty annotation");
    const ScaledScores x0 = scale_scores(annotation);
    const NoisyScores x_t = q_sample(schedule, x0, t, {std::vector<double>(eps.begin(), eps.end()), 0});
    LossAndGradients lg = loss_and_gradients(params, x_t, features, t, eps);
    if (!std::isfinite(lg.loss)) throw NumericError("train_step: non-finite loss at t=" + std::to_string(t));
    adam_step(params, lg.grads, opt, lr);
    return lg.loss;
}

double train_step(PredictorParams& params, OptimizerState& opt, const NoiseSchedule& schedule,
                  const VideoRecord& video, int annotation_index, Rng& rng, double lr) {
    if (annotation_index < 0 || annotation_index >= static_cast<int>(video.annotations.size()))
        throw DataError("train_step: video '" + video.id + "' has no annotation " + std::to_string(annotation_index));
    const RawScores& annotation = video.annotations[annotation_index];
    if (annotation.values.empty()) throw DataError("train_step: video '" + video.id + "' has an empty annotation");
    const int t = rng.uniform_int(1, schedule.t_active());
    const std::vector<double> eps = rng.normal_vector(annotation.values.size());
    return train_step_with(params, opt, schedule, video.features, annotation, t, eps, lr);
}

void write_train_report(const TrainReport& report, std::ostream& out) {
    out << "epoch\tmean_loss\tlr\tseconds\n";
    for (const auto& e : report.epochs)
        out << fmt::format("{}\t{:.9g}\t{:.9g}\t{:.3f}\n", e.epoch, e.mean_loss, e.lr, e.seconds);
    out << "\n[summary]\n";
    out << "epochs = " << report.epochs.size() << '\n';
    out << "steps = " << report.steps << '\n';
    out << fmt::format("final_mean_loss = {:.9g}\n", report.epochs.empty() ? 0.0 : report.epochs.back().mean_loss);
    out << fmt::format("wall_seconds = {:.3f}\n", report.wall_seconds);
    out << "final_checkpoint = " << report.final_checkpoint.string() << '\n';
    out << "seed = " << report.seed << '\n';
}

TrainResult train(const Dataset& data, const SplitManifest& split, const TrainConfig& cfg,
                  const PredictorConfig& predictor_cfg, const NoiseSchedule& schedule,
                  const std::filesystem::path& out_dir, const TrainHooks& hooks) {
    cfg.validate();
    if (cfg.t_active > schedule.t_base()) throw ConfigError("train.t_active exceeds the schedule length");
    if (split.train_ids.empty()) throw DataError("training split '" + split.name + "' is empty");
    if (predictor_cfg.d_feature != data.d_feature)
        throw ShapeError("predictor d_feature " + std::to_string(predictor_cfg.d_feature) + " vs dataset " +
                         std::to_string(data.d_feature));

    std::vector<const VideoRecord*> videos;
    for (const auto& id : split.train_ids) {
        const VideoRecord& v = data.video(id);
        if (v.annotations.empty()) throw DataError("video '" + id + "' has no annotations");
        videos.push_back(&v);
    }

    const NoiseSchedule active = schedule.with_active(cfg.t_active);
    TrainResult result{init_predictor(predictor_cfg), {}, {}};
    result.optimizer = make_optimizer(result.params, cfg.base_lr, cfg.weight_decay);
    result.report.seed = cfg.seed;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    Rng rng(cfg.seed);
    const auto start = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const double lr = lr_at(epoch, cfg);
        if (cfg.shuffle) std::shuffle(videos.begin(), videos.end(), rng.engine());

        double loss_sum = 0.0;
        long steps = 0;
        for (const VideoRecord* v : videos) {
            for (int k = 0; k < static_cast<int>(v->annotations.size()); ++k) {
                const double loss = train_step(result.params, result.optimizer, active, *v, k, rng, lr);
                if (!std::isfinite(loss))
                    throw NumericError(fmt::format("non-finite loss: epoch {}, video '{}', annotation {}", epoch,
                                                   v->id, k));
                loss_sum += loss;
                ++steps;
                ++result.report.steps;
                if (hooks.on_step) hooks.on_step(result.report.steps, epoch, loss);
            }
        }

        EpochRecord rec{epoch, loss_sum / static_cast<double>(steps), lr,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count(), steps};
        result.report.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs)
            save_checkpoint(result.params, &result.optimizer, out_dir / fmt::format("checkpoint_epoch_{}.bin", epoch));
    }
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (!out_dir.empty()) {
        result.report.final_checkpoint = out_dir / "checkpoint.bin";
        save_checkpoint(result.params, &result.optimizer, result.report.final_checkpoint);
        std::ofstream log(out_dir / "train_log.txt", std::ios::trunc);
        write_train_report(result.report, log);
    }
    return result;
}

} // namespace diffsumm
