#pragma once

#include "diffsumm/dataset.hpp"
#include "diffsumm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace diffsumm {

enum class ScorerKind { repdiv_baseline, constant, oracle_from_annotation, external_file };

struct ScorerSpec {
    ScorerKind kind = ScorerKind::repdiv_baseline;
    double constant = 0.5;
    int annotation_index = 0;
    std::filesystem::path directory; // external_file: holds <video id>.txt
    double bandwidth = 0.0;          // repdiv: <= 0 picks the mean nearest-medoid distance
    int window = 10;                 // repdiv: +/- frames for the uniqueness term
    std::uint64_t seed = 0;          // repdiv: medoid initialization

    void validate() const;
};

/// "repdiv", "constant:0.5", "oracle:2", "file:/path/to/dir".
ScorerSpec parse_scorer(const std::string& text);
std::string to_string(const ScorerSpec& spec);

/// The initializer x_u for one video, in [0, 1].
RawScores score_video(const ScorerSpec& spec, const VideoRecord& video);

struct RepDivParts {
    std::vector<double> representativeness;
    std::vector<double> uniqueness;
    std::vector<double> score;
};

/// Training-free representativeness/uniqueness scorer.
RepDivParts repdiv_scores(const FrameFeatures& f, double bandwidth = 0.0, int window = 10, std::uint64_t seed = 0);

/// Min-max to [0, 1]; a range below 1e-9 maps everything to 0.5.
std::vector<double> minmax_normalize(std::vector<double> v);

void write_score_file(const std::filesystem::path& path, const std::string& video_id, const RawScores& scores);
RawScores read_score_file(const std::filesystem::path& path, std::string* video_id = nullptr);

} // namespace diffsumm
