#pragma once

#include "diffsumm/dataset.hpp"
#include "diffsumm/diffusion.hpp"
#include "diffsumm/evaluate.hpp"
#include "diffsumm/predictor.hpp"
#include "diffsumm/training.hpp"
#include "diffsumm/unsupervised.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace diffsumm {

/// Flat dotted-key configuration ("train.epochs = 100"). Every key has a
/// default; setting an unknown key is a ConfigError.
class RunConfig {
public:
    RunConfig();

    void set(const std::string& key, const std::string& value);
    /// "key=value" as given on the command line.
    void set_assignment(const std::string& assignment, const std::string& default_section = {});
    /// Lines of "key = value"; '#' starts a comment. Keys may omit
    /// `default_section.` (so a synth spec file can say "n_videos = 20").
    void merge_file(const std::filesystem::path& path, const std::string& default_section = {});
    void merge_text(const std::string& text, const std::string& origin, const std::string& default_section = {});

    const std::string& get(const std::string& key) const;
    bool is_set(const std::string& key) const; // explicitly assigned, not a default

    /// Sorted "key = value" lines.
    std::string dump() const;

    std::uint64_t seed() const;
    TrainConfig train() const;
    PredictorConfig predictor(int d_feature) const;
    EvalProtocol protocol() const;
    ScorerSpec scorer() const;
    NoiseSchedule schedule() const; // t_active = schedule.t_active
    SyntheticSpec synthetic() const;
    SplitSetting split_setting() const;

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

/// The seed used when neither a flag nor a config key names one: DIFFSUMM_SEED
/// if set, else 0.
std::uint64_t fallback_seed();

} // namespace diffsumm
