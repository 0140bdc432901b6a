#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace diffsumm {

/// Frame features, one row per (subsampled) frame.
using FrameFeatures = Eigen::MatrixXd;

/// Per-frame importance in [0, 1].
struct RawScores {
    std::vector<double> values;
};

/// Importance mapped to [-1, 1].
struct ScaledScores {
    std::vector<double> values;
};

/// A point on the diffusion chain; `step` is the t the values belong to.
struct NoisyScores {
    std::vector<double> values;
    int step = 0;
};

struct GaussianDraw {
    std::vector<double> values;
    std::uint64_t rng_seed = 0;
};

} // namespace diffsumm
