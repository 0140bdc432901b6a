#pragma once

#include "diffsumm/summarize.hpp"
#include "diffsumm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace diffsumm {

using FrameMask = std::vector<std::uint8_t>;

struct VideoRecord {
    std::string id;
    FrameFeatures features; // n x d_feature, values representable as f32
    std::vector<RawScores> annotations;
    ShotSegmentation change_points;
    std::optional<std::vector<FrameMask>> user_summaries;
    int n_frames_original = 0;
    std::optional<std::vector<int>> picks;
    std::optional<std::vector<double>> planted_truth;

    int frame_count() const { return static_cast<int>(features.rows()); }
    /// Throws (DomainError / DataError / ShapeError) naming the video and field.
    void validate(int d_feature) const;
};

struct Dataset {
    std::string name;
    int d_feature = 0;
    std::vector<VideoRecord> videos;

    const VideoRecord& video(const std::string& id) const;
    std::vector<std::string> ids() const;
};

Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

enum class SplitSetting { canonical, augmented, transfer, fpv };

SplitSetting parse_split_setting(const std::string& s);
std::string to_string(SplitSetting s);

struct SplitManifest {
    std::string name;
    SplitSetting setting = SplitSetting::canonical;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    int split_index = 0;
    std::uint64_t seed = 0;

    bool operator==(const SplitManifest&) const = default;
};

/// `ids` are the target dataset; `auxiliary_ids` are the extra training videos
/// (augmented) or the source dataset (transfer / fpv).
std::vector<SplitManifest> make_splits(const std::vector<std::string>& ids, SplitSetting setting, int n_splits = 5,
                                       double ratio = 0.8, std::uint64_t seed = 0,
                                       const std::vector<std::string>& auxiliary_ids = {});

void write_split(const SplitManifest& split, const std::filesystem::path& path);
SplitManifest read_split(const std::filesystem::path& path);

enum class ImportanceProfile { blocky, smooth };

struct SyntheticSpec {
    int n_videos = 20;
    int frames_per_video = 120;
    int d_feature = 32;
    int n_annotators = 5;
    double annotator_noise = 0.2;
    int n_shots = 12;
    ImportanceProfile importance_profile = ImportanceProfile::blocky;
    std::uint64_t seed = 0;
    /// Seeds the feature geometry shared by all videos; sets drawn with the
    /// same world_seed but different seeds are exchangeable train/test pools.
    std::uint64_t world_seed = 0;
    double signal_strength = 1.0;
    double feature_noise = 0.5;
    std::string id_prefix = "syn";

    void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

} // namespace diffsumm
