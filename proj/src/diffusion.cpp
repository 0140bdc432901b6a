#include "diffsumm/diffusion.hpp"

#include "diffsumm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace diffsumm {

namespace {

void require_step(const NoiseSchedule& s, int t) {
    if (t < 1 || t > s.t_active())
        throw StepError("step " + std::to_string(t) + " outside [1, " + std::to_string(s.t_active()) + "]");
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw ShapeError(std::string(what) + ": length " + std::to_string(a) + " vs " + std::to_string(b));
}

} // namespace

NoiseSchedule::NoiseSchedule(int t_base, double beta_start, double beta_end, int t_active)
    : t_base_(t_base), t_active_(t_active), beta_start_(beta_start), beta_end_(beta_end) {
    if (t_base < 1) throw ParameterError("t_base must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ParameterError("beta bounds must satisfy 0 < beta_start <= beta_end < 1");
    if (t_active < 0 || t_active > t_base)
        throw ParameterError("t_active " + std::to_string(t_active) + " must lie in [0, t_base]");

    beta_.assign(t_base + 1, 0.0);
    alpha_.assign(t_base + 1, 1.0);
    alpha_bar_.assign(t_base + 1, 1.0);
    for (int t = 1; t <= t_base; ++t) {
        beta_[t] = t_base == 1 ? beta_start
                               : beta_start + (beta_end - beta_start) * double(t - 1) / double(t_base - 1);
        alpha_[t] = 1.0 - beta_[t];
        alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    }
}

int NoiseSchedule::check(int t, int hi) {
    if (t < 1 || t > hi) throw StepError("schedule index " + std::to_string(t) + " out of range");
    return t;
}

int NoiseSchedule::check0(int t, int hi) {
    if (t < 0 || t > hi) throw StepError("schedule index " + std::to_string(t) + " out of range");
    return t;
}

NoiseSchedule NoiseSchedule::with_active(int t_active) const {
    return NoiseSchedule(t_base_, beta_start_, beta_end_, t_active);
}

NoiseSchedule build_schedule(int t_base, double beta_start, double beta_end, int t_active) {
    // t_active = 0 is accepted so the sampler can run an empty chain.
    return NoiseSchedule(t_base, beta_start, beta_end, t_active);
}

ScaledScores scale_scores(const RawScores& x) {
    ScaledScores out;
    out.values.reserve(x.values.size());
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        double v = x.values[i];
        if (!(v >= 0.0 && v <= 1.0))
            throw DomainError("score at frame " + std::to_string(i) + " is outside [0, 1]");
        out.values.push_back(2.0 * v - 1.0);
    }
    return out;
}

RawScores unscale_scores(std::span<const double> x) {
    RawScores out;
    out.values.reserve(x.size());
    for (double v : x) out.values.push_back(std::clamp((v + 1.0) / 2.0, 0.0, 1.0));
    return out;
}

NoisyScores q_sample(const NoiseSchedule& s, const ScaledScores& x0, int t, const GaussianDraw& eps) {
    require_step(s, t);
    require_same_length(x0.values.size(), eps.values.size(), "q_sample");
    const double a = std::sqrt(s.alpha_bar(t));
    const double b = std::sqrt(1.0 - s.alpha_bar(t));
    NoisyScores out{std::vector<double>(x0.values.size()), t};
    for (std::size_t i = 0; i < x0.values.size(); ++i) out.values[i] = a * x0.values[i] + b * eps.values[i];
    return out;
}

NoisyScores q_sample_stepwise(const NoiseSchedule& s, const ScaledScores& x0, int t, Rng& rng) {
    require_step(s, t);
    NoisyScores out{x0.values, 0};
    for (int k = 1; k <= t; ++k) {
        const double keep = std::sqrt(s.alpha(k));
        const double add = std::sqrt(s.beta(k));
        for (double& v : out.values) v = keep * v + add * rng.normal();
    }
    out.step = t;
    return out;
}

std::vector<double> posterior_mean(const NoiseSchedule& s, const NoisyScores& x_t, const ScaledScores& x0) {
    const int t = x_t.step;
    require_step(s, t);
    require_same_length(x_t.values.size(), x0.values.size(), "posterior_mean");
    const double denom = 1.0 - s.alpha_bar(t);
    const double c0 = std::sqrt(s.alpha_bar(t - 1)) * s.beta(t) / denom;
    const double ct = std::sqrt(s.alpha(t)) * (1.0 - s.alpha_bar(t - 1)) / denom;
    std::vector<double> out(x0.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c0 * x0.values[i] + ct * x_t.values[i];
    return out;
}

std::vector<double> predict_x0_from_eps(const NoiseSchedule& s, const NoisyScores& x_t,
                                        std::span<const double> eps_hat) {
    const int t = x_t.step;
    require_step(s, t);
    require_same_length(x_t.values.size(), eps_hat.size(), "predict_x0_from_eps");
    const double a = std::sqrt(s.alpha_bar(t));
    const double b = std::sqrt(1.0 - s.alpha_bar(t));
    std::vector<double> out(eps_hat.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t.values[i] - b * eps_hat[i]) / a;
    return out;
}

double sigma(const NoiseSchedule& s, int t) {
    require_step(s, t);
    return std::sqrt((1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t));
}

NoisyScores denoise_step(const NoiseSchedule& s, const NoisePredictor& predictor, const NoisyScores& x_t,
                         const FrameFeatures& f, const GaussianDraw& z) {
    const int t = x_t.step;
    require_step(s, t);
    const auto n = x_t.values.size();
    require_same_length(n, static_cast<std::size_t>(f.rows()), "denoise_step features");
    require_same_length(n, z.values.size(), "denoise_step noise");

    const std::vector<double> eps_hat = predictor(x_t, f, t);
    require_same_length(n, eps_hat.size(), "denoise_step prediction");

    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(t));
    const double eps_coef = (1.0 - s.alpha(t)) / std::sqrt(1.0 - s.alpha_bar(t));
    const double sig = sigma(s, t);
    NoisyScores out{std::vector<double>(n), t - 1};
    for (std::size_t i = 0; i < n; ++i)
        out.values[i] = inv_sqrt_alpha * (x_t.values[i] - eps_coef * eps_hat[i]) + sig * z.values[i];
    return out;
}

RawScores generate_scores(const NoiseSchedule& s, const NoisePredictor& predictor, const FrameFeatures& f,
                          const RawScores& init, Rng& rng) {
    require_same_length(init.values.size(), static_cast<std::size_t>(f.rows()), "generate_scores init");
    ScaledScores x_start = scale_scores(init);
    if (s.t_active() == 0) return init;

    NoisyScores x{std::move(x_start.values), s.t_active()};
    const std::size_t n = x.values.size();
    for (int t = s.t_active(); t >= 1; --t) {
        GaussianDraw z{t > 1 ? rng.normal_vector(n) : std::vector<double>(n, 0.0), rng.seed()};
        x = denoise_step(s, predictor, x, f, z);
    }
    return unscale_scores(x.values);
}

void write_schedule_table(const NoiseSchedule& s, std::ostream& out) {
    const NoiseSchedule full = s.with_active(s.t_base());
    out << "t\tbeta\talpha_bar\tsqrt_alpha_bar\tsqrt_one_minus_alpha_bar\tsigma\n";
    for (int t = 1; t <= full.t_base(); ++t) {
        const double ab = full.alpha_bar(t);
        out << fmt::format("{}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\t{:.17g}\n", t, full.beta(t), ab,
                           std::sqrt(ab), std::sqrt(1.0 - ab), sigma(full, t));
    }
}

} // namespace diffsumm
