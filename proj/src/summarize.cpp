#include "diffsumm/summarize.hpp"

#include "diffsumm/errors.hpp"

#include <cmath>
#include <string>

namespace diffsumm {

void ShotSegmentation::validate(int n) const {
    if (shots.empty()) throw DataError("shot segmentation is empty");
    int expect = 0;
    for (std::size_t i = 0; i < shots.size(); ++i) {
        const auto& s = shots[i];
        if (s.start != expect)
            throw DataError("shot " + std::to_string(i) + " starts at " + std::to_string(s.start) + ", expected " +
                            std::to_string(expect) + " (gap or overlap)");
        if (s.end <= s.start) throw DataError("shot " + std::to_string(i) + " is empty or reversed");
        expect = s.end;
    }
    if (expect != n)
        throw DataError("shots cover [0, " + std::to_string(expect) + ") but the video has " + std::to_string(n) +
                        " frames");
}

std::vector<double> shot_scores(const RawScores& frame_scores, const ShotSegmentation& seg) {
    seg.validate(static_cast<int>(frame_scores.values.size()));
    std::vector<double> out;
    out.reserve(seg.shots.size());
    for (const auto& s : seg.shots) {
        double sum = 0.0;
        for (int i = s.start; i < s.end; ++i) sum += frame_scores.values[i];
        out.push_back(sum / s.length());
    }
    return out;
}

SummarySelection knapsack_select(std::span<const double> values, std::span<const int> lengths, int budget_frames) {
    if (values.size() != lengths.size())
        throw ShapeError("knapsack: " + std::to_string(values.size()) + " values vs " + std::to_string(lengths.size()) +
                         " lengths");
    if (budget_frames < 0) throw ParameterError("knapsack: negative budget");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        if (lengths[i] < 0) throw ParameterError("knapsack: negative length for item " + std::to_string(i));
        if (!std::isfinite(values[i])) throw NumericError("knapsack: non-finite value for item " + std::to_string(i));
    }

    const std::size_t k = values.size();
    const std::size_t cap = static_cast<std::size_t>(budget_frames);
    // best[i][w]: optimum over items i..k-1 with capacity w. Filling from the
    // back lets the forward reconstruction prefer taking earlier items.
    std::vector<std::vector<double>> best(k + 1, std::vector<double>(cap + 1, 0.0));
    for (std::size_t i = k; i-- > 0;) {
        const auto len = static_cast<std::size_t>(lengths[i]);
        for (std::size_t w = 0; w <= cap; ++w) {
            double v = best[i + 1][w];
            if (len <= w) v = std::max(v, values[i] + best[i + 1][w - len]);
            best[i][w] = v;
        }
    }

    SummarySelection sel;
    sel.selected.assign(k, 0);
    sel.budget_frames = budget_frames;
    std::size_t w = cap;
    for (std::size_t i = 0; i < k; ++i) {
        const auto len = static_cast<std::size_t>(lengths[i]);
        if (len <= w && values[i] + best[i + 1][w - len] == best[i][w]) {
            sel.selected[i] = 1;
            sel.total_value += values[i];
            w -= len;
        }
    }
    return sel;
}

SummarySelection summarize_video(const RawScores& frame_scores, const ShotSegmentation& seg, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("summary ratio must lie in (0, 1]");
    const int n = static_cast<int>(frame_scores.values.size());
    const std::vector<double> values = shot_scores(frame_scores, seg);
    std::vector<int> lengths;
    lengths.reserve(seg.shots.size());
    for (const auto& s : seg.shots) lengths.push_back(s.length());

    SummarySelection sel = knapsack_select(values, lengths, static_cast<int>(std::floor(ratio * n)));
    sel.frame_mask.assign(n, 0);
    for (std::size_t i = 0; i < seg.shots.size(); ++i)
        if (sel.selected[i])
            for (int f = seg.shots[i].start; f < seg.shots[i].end; ++f) sel.frame_mask[f] = 1;
    return sel;
}

void write_summary(std::ostream& out, std::string_view video_id, const ShotSegmentation& seg,
                   const SummarySelection& sel) {
    out << "video " << video_id << '\n' << "budget_frames " << sel.budget_frames << '\n' << "shots";
    for (std::size_t i = 0; i < seg.shots.size() && i < sel.selected.size(); ++i)
        if (sel.selected[i]) out << ' ' << seg.shots[i].start << '-' << seg.shots[i].end;
    out << '\n' << "mask_rle";
    std::size_t i = 0;
    while (i < sel.frame_mask.size()) {
        std::size_t j = i;
        while (j < sel.frame_mask.size() && sel.frame_mask[j] == sel.frame_mask[i]) ++j;
        out << ' ' << int(sel.frame_mask[i]) << 'x' << (j - i);
        i = j;
    }
    out << "\n\n";
}

} // namespace diffsumm
