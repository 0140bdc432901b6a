#pragma once

#include "diffsumm/rng.hpp"
#include "diffsumm/types.hpp"

#include <functional>
#include <ostream>
#include <span>
#include <vector>

namespace diffsumm {

/// Linear variance schedule. Tables are indexed by step t in [0, t_base];
/// entry 0 holds the alpha_bar_0 = 1 convention (beta[0] = 0).
/// Only the first t_active steps are used for noising and sampling.
class NoiseSchedule {
public:
    NoiseSchedule(int t_base, double beta_start, double beta_end, int t_active);

    int t_base() const { return t_base_; }
    int t_active() const { return t_active_; }

    double beta(int t) const { return beta_.at(check(t, t_base_)); }
    double alpha(int t) const { return alpha_.at(check(t, t_base_)); }
    double alpha_bar(int t) const { return alpha_bar_.at(check0(t, t_base_)); }

    /// Same tables, different active horizon. Throws if it exceeds t_base.
    NoiseSchedule with_active(int t_active) const;

private:
    static int check(int t, int hi);
    static int check0(int t, int hi);

    int t_base_;
    int t_active_;
    double beta_start_;
    double beta_end_;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

NoiseSchedule build_schedule(int t_base = 1000, double beta_start = 1e-4, double beta_end = 0.02,
                             int t_active = 200);

ScaledScores scale_scores(const RawScores& x);
RawScores unscale_scores(std::span<const double> x);

NoisyScores q_sample(const NoiseSchedule& s, const ScaledScores& x0, int t, const GaussianDraw& eps);

/// Runs the one-step forward kernel t times with fresh draws. Test oracle for q_sample.
NoisyScores q_sample_stepwise(const NoiseSchedule& s, const ScaledScores& x0, int t, Rng& rng);

std::vector<double> posterior_mean(const NoiseSchedule& s, const NoisyScores& x_t, const ScaledScores& x0);
std::vector<double> predict_x0_from_eps(const NoiseSchedule& s, const NoisyScores& x_t,
                                        std::span<const double> eps_hat);
double sigma(const NoiseSchedule& s, int t);

/// eps_theta(x_t, f, t). Anything with this shape can drive the sampler.
using NoisePredictor =
    std::function<std::vector<double>(const NoisyScores& x_t, const FrameFeatures& f, int t)>;

NoisyScores denoise_step(const NoiseSchedule& s, const NoisePredictor& predictor, const NoisyScores& x_t,
                         const FrameFeatures& f, const GaussianDraw& z);

/// Ancestral sampling from the scaled initializer at t_active down to 0.
RawScores generate_scores(const NoiseSchedule& s, const NoisePredictor& predictor, const FrameFeatures& f,
                          const RawScores& init, Rng& rng);

/// Tab-separated (t, beta, alpha_bar, sqrt_alpha_bar, sqrt_one_minus_alpha_bar, sigma), t = 1..t_base.
void write_schedule_table(const NoiseSchedule& s, std::ostream& out);

} // namespace diffsumm
