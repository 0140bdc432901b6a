#pragma once

#include "diffsumm/types.hpp"

#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

namespace diffsumm {

struct Shot {
    int start = 0; // inclusive
    int end = 0;   // exclusive
    int length() const { return end - start; }
    bool operator==(const Shot&) const = default;
};

/// Contiguous, non-empty, ordered shots covering [0, n).
struct ShotSegmentation {
    std::vector<Shot> shots;

    int frame_count() const { return shots.empty() ? 0 : shots.back().end; }
    /// Throws DataError unless the shots partition [0, n).
    void validate(int n) const;
};

struct SummarySelection {
    std::vector<std::uint8_t> selected;   // per shot
    std::vector<std::uint8_t> frame_mask; // per frame
    int budget_frames = 0;
    double total_value = 0.0;
};

std::vector<double> shot_scores(const RawScores& frame_scores, const ShotSegmentation& seg);

/// Exact 0/1 knapsack. Among optimal sets the one that selects the earliest
/// possible shots wins (compare selection masks left to right, 1 before 0).
SummarySelection knapsack_select(std::span<const double> values, std::span<const int> lengths, int budget_frames);

SummarySelection summarize_video(const RawScores& frame_scores, const ShotSegmentation& seg, double ratio = 0.15);

/// Text block: selected shot intervals and a run-length encoded frame mask.
void write_summary(std::ostream& out, std::string_view video_id, const ShotSegmentation& seg,
                   const SummarySelection& sel);

} // namespace diffsumm
