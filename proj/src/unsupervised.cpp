#include "diffsumm/unsupervised.hpp"

#include "diffsumm/errors.hpp"
#include "diffsumm/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace diffsumm {

void ScorerSpec::validate() const {
    switch (kind) {
    case ScorerKind::constant:
        if (!(constant >= 0.0 && constant <= 1.0)) throw ConfigError("constant scorer value must lie in [0, 1]");
        break;
    case ScorerKind::oracle_from_annotation:
        if (annotation_index < 0) throw ConfigError("oracle scorer needs a non-negative annotation index");
        break;
    case ScorerKind::external_file:
        if (directory.empty()) throw ConfigError("file scorer needs a directory");
        break;
    case ScorerKind::repdiv_baseline:
        if (window < 1) throw ConfigError("repdiv window must be >= 1");
        if (!std::isfinite(bandwidth)) throw ConfigError("repdiv bandwidth must be finite");
        break;
    }
}

ScorerSpec parse_scorer(const std::string& text) {
    ScorerSpec spec;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    try {
        if (kind == "repdiv") {
            spec.kind = ScorerKind::repdiv_baseline;
            if (!arg.empty()) spec.bandwidth = std::stod(arg);
        } else if (kind == "constant") {
            spec.kind = ScorerKind::constant;
            if (!arg.empty()) spec.constant = std::stod(arg);
        } else if (kind == "oracle") {
            spec.kind = ScorerKind::oracle_from_annotation;
            if (!arg.empty()) spec.annotation_index = std::stoi(arg);
        } else if (kind == "file") {
            spec.kind = ScorerKind::external_file;
            spec.directory = arg;
        } else {
            throw ConfigError("unknown scorer '" + text + "' (expected repdiv, constant:C, oracle:K or file:DIR)");
        }
    } catch (const std::logic_error&) {
        throw ConfigError("bad scorer argument in '" + text + "'");
    }
    spec.validate();
    return spec;
}

std::string to_string(const ScorerSpec& spec) {
    std::ostringstream out;
    switch (spec.kind) {
    case ScorerKind::repdiv_baseline: out << "repdiv"; break;
    case ScorerKind::constant: out << "constant:" << spec.constant; break;
    case ScorerKind::oracle_from_annotation: out << "oracle:" << spec.annotation_index; break;
    case ScorerKind::external_file: out << "file:" << spec.directory.string(); break;
    }
    return out.str();
}

std::vector<double> minmax_normalize(std::vector<double> v) {
    if (v.empty()) return v;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double min = *lo, range = *hi - *lo;
    if (range < 1e-9) {
        std::fill(v.begin(), v.end(), 0.5);
        return v;
    }
    for (double& x : v) x = (x - min) / range;
    return v;
}

namespace {

// Rows are medoid indices; returns the medoid set after PAM-style alternation.
std::vector<int> k_medoids(const Eigen::MatrixXd& dist, int k, Rng& rng) {
    const int n = static_cast<int>(dist.rows());
    std::vector<int> medoids{rng.uniform_int(0, n - 1)};
    // Farthest-point seeding keeps the start deterministic given the first pick.
    while (static_cast<int>(medoids.size()) < k) {
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < n; ++i) {
            double dmin = std::numeric_limits<double>::infinity();
            for (int m : medoids) dmin = std::min(dmin, dist(i, m));
            if (dmin > best_d) {
                best_d = dmin;
                best = i;
            }
        }
        medoids.push_back(best);
    }

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 50; ++iter) {
        for (int i = 0; i < n; ++i) {
            int arg = 0;
            for (int c = 1; c < k; ++c)
                if (dist(i, medoids[c]) < dist(i, medoids[arg])) arg = c;
            assign[i] = arg;
        }
        bool changed = false;
        for (int c = 0; c < k; ++c) {
            int best = medoids[c];
            double best_cost = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                double cost = 0.0;
                for (int j = 0; j < n; ++j)
                    if (assign[j] == c) cost += dist(i, j);
                if (cost < best_cost) {
                    best_cost = cost;
                    best = i;
                }
            }
            if (best != medoids[c]) {
                medoids[c] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return medoids;
}

} // namespace

RepDivParts repdiv_scores(const FrameFeatures& f, double bandwidth, int window, std::uint64_t seed) {
    const int n = static_cast<int>(f.rows());
    if (n < 1) throw DataError("repdiv: empty feature sequence");
    if (window < 1) throw ConfigError("repdiv window must be >= 1");

    const Eigen::VectorXd sq = f.rowwise().squaredNorm();
    Eigen::MatrixXd dist = (-2.0 * f * f.transpose()).colwise() + sq;
    dist.rowwise() += sq.transpose();
    dist = dist.cwiseMax(0.0);

    Rng rng(seed);
    const int k = std::min(n, std::max(2, n / 20));
    const std::vector<int> medoids = k_medoids(dist, k, rng);

    std::vector<double> nearest(n);
    for (int i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (int m : medoids) dmin = std::min(dmin, dist(i, m));
        nearest[i] = dmin;
    }
    double h = bandwidth;
    if (h <= 0.0) {
        h = 0.0;
        for (double v : nearest) h += v;
        h /= n;
        if (h < 1e-12) h = 1.0;
    }

    RepDivParts parts;
    parts.representativeness.resize(n);
    parts.uniqueness.resize(n);
    const Eigen::VectorXd norms = sq.cwiseSqrt();
    for (int i = 0; i < n; ++i) {
        parts.representativeness[i] = std::exp(-nearest[i] / h);
        double sim = 0.0;
        int count = 0;
        for (int j = std::max(0, i - window); j <= std::min(n - 1, i + window); ++j) {
            if (j == i) continue;
            const double denom = norms[i] * norms[j];
            sim += denom > 0.0 ? f.row(i).dot(f.row(j)) / denom : 0.0;
            ++count;
        }
        parts.uniqueness[i] = count > 0 ? 1.0 - sim / count : 0.0;
    }

    auto component = [](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        if (*hi - *lo < 1e-9) return std::vector<double>(v.size(), 0.0);
        return minmax_normalize(v);
    };
    const auto r = component(parts.representativeness);
    const auto u = component(parts.uniqueness);
    parts.score.resize(n);
    for (int i = 0; i < n; ++i) parts.score[i] = 0.5 * r[i] + 0.5 * u[i];
    parts.score = minmax_normalize(std::move(parts.score));
    return parts;
}

RawScores score_video(const ScorerSpec& spec, const VideoRecord& video) {
    spec.validate();
    const int n = video.frame_count();
    if (n < 1) throw DataError("scorer: video '" + video.id + "' has no frames");
    switch (spec.kind) {
    case ScorerKind::constant: return {std::vector<double>(n, spec.constant)};
    case ScorerKind::oracle_from_annotation:
        if (spec.annotation_index >= static_cast<int>(video.annotations.size()))
            throw DataError("oracle scorer: video '" + video.id + "' has no annotation " +
                            std::to_string(spec.annotation_index));
        return video.annotations[spec.annotation_index];
    case ScorerKind::external_file: {
        std::string id;
        RawScores s = read_score_file(spec.directory / (video.id + ".txt"), &id);
        if (id != video.id) throw DataError("score file for '" + video.id + "' declares id '" + id + "'");
        if (static_cast<int>(s.values.size()) != n)
            throw ShapeError("score file for '" + video.id + "' has " + std::to_string(s.values.size()) +
                             " frames, video has " + std::to_string(n));
        return s;
    }
    case ScorerKind::repdiv_baseline:
        return {repdiv_scores(video.features, spec.bandwidth, spec.window, spec.seed).score};
    }
    throw ConfigError("unknown scorer kind");
}

void write_score_file(const std::filesystem::path& path, const std::string& video_id, const RawScores& scores) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << video_id << ' ' << scores.values.size() << '\n';
    char buf[64];
    for (double v : scores.values) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("score file: value outside [0, 1]");
        const auto res = std::to_chars(buf, buf + sizeof buf, static_cast<float>(v));
        out.write(buf, res.ptr - buf);
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

RawScores read_score_file(const std::filesystem::path& path, std::string* video_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open score file " + path.string());
    std::string id;
    long long n = -1;
    {
        std::string header;
        std::getline(in, header);
        std::istringstream hs(header);
        if (!(hs >> id >> n) || n < 0) throw DataError(path.string() + ": malformed header");
    }
    RawScores out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        float v = 0.0f;
        const auto res = std::from_chars(line.data(), line.data() + line.size(), v);
        if (res.ec != std::errc() || res.ptr != line.data() + line.size())
            throw DataError(path.string() + ": bad value '" + line + "'");
        if (!(v >= 0.0f && v <= 1.0f)) throw DomainError(path.string() + ": value outside [0, 1]");
        out.values.push_back(v);
    }
    if (static_cast<long long>(out.values.size()) != n)
        throw ShapeError(path.string() + ": header says " + std::to_string(n) + " frames, found " +
                         std::to_string(out.values.size()));
    if (video_id) *video_id = id;
    return out;
}

} // namespace diffsumm
