#include "diffsumm/dataset.hpp"

#include "diffsumm/errors.hpp"
#include "diffsumm/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace diffsumm {

using nlohmann::json;

namespace {

std::string where(const std::string& id, const std::string& field) { return "video '" + id + "', field '" + field + "'"; }

} // namespace

void VideoRecord::validate(int d_feature) const {
    if (id.empty()) throw DataError("video with empty id");
    const int n = frame_count();
    if (n < 1) throw DataError(where(id, "features") + ": no frames");
    if (features.cols() != d_feature)
        throw ShapeError(where(id, "features") + ": width " + std::to_string(features.cols()) + ", manifest says " +
                         std::to_string(d_feature));
    if (!features.allFinite()) throw DomainError(where(id, "features") + ": non-finite value");
    if (annotations.empty()) throw DataError(where(id, "annotations") + ": at least one annotation required");
    for (std::size_t k = 0; k < annotations.size(); ++k) {
        const auto& a = annotations[k].values;
        if (static_cast<int>(a.size()) != n)
            throw ShapeError(where(id, "annotations") + ": annotator " + std::to_string(k) + " has " +
                             std::to_string(a.size()) + " frames, expected " + std::to_string(n));
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!(a[i] >= 0.0 && a[i] <= 1.0))
                throw DomainError(where(id, "annotations") + ": annotator " + std::to_string(k) + " frame " +
                                  std::to_string(i) + " value outside [0, 1]");
    }
    try {
        change_points.validate(n);
    } catch (const DataError& e) {
        throw DataError(where(id, "change_points") + ": partition error: " + e.what());
    }
    if (user_summaries) {
        for (std::size_t k = 0; k < user_summaries->size(); ++k) {
            const auto& m = (*user_summaries)[k];
            if (static_cast<int>(m.size()) != n)
                throw ShapeError(where(id, "user_summaries") + ": user " + std::to_string(k) + " length mismatch");
            for (auto v : m)
                if (v > 1) throw DomainError(where(id, "user_summaries") + ": non-binary entry");
        }
    }
    if (picks && static_cast<int>(picks->size()) != n) throw ShapeError(where(id, "picks") + ": length mismatch");
    if (planted_truth) {
        if (static_cast<int>(planted_truth->size()) != n)
            throw ShapeError(where(id, "planted_truth") + ": length mismatch");
        for (double v : *planted_truth)
            if (!(v >= 0.0 && v <= 1.0)) throw DomainError(where(id, "planted_truth") + ": value outside [0, 1]");
    }
    if (n_frames_original < n) throw DataError(where(id, "n_frames_original") + ": smaller than frame count");
}

const VideoRecord& Dataset::video(const std::string& id) const {
    for (const auto& v : videos)
        if (v.id == id) return v;
    throw DataError("dataset '" + name + "' has no video '" + id + "'");
}

std::vector<std::string> Dataset::ids() const {
    std::vector<std::string> out;
    out.reserve(videos.size());
    for (const auto& v : videos) out.push_back(v.id);
    return out;
}

namespace {

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump() << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

const json& field(const json& j, const char* key, const std::string& id) {
    const auto it = j.find(key);
    if (it == j.end()) throw DataError(where(id, key) + ": missing");
    return *it;
}

template <class T> T as(const json& j, const std::string& id, const char* key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw DataError(where(id, key) + ": wrong type");
    }
}

VideoRecord parse_video(const json& j, const std::string& expected_id) {
    VideoRecord v;
    v.id = as<std::string>(field(j, "id", expected_id), expected_id, "id");
    if (v.id != expected_id) throw DataError("file for '" + expected_id + "' declares id '" + v.id + "'");

    const auto rows = as<std::vector<std::vector<float>>>(field(j, "features", v.id), v.id, "features");
    const auto d = rows.empty() ? 0 : rows.front().size();
    v.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) throw ShapeError(where(v.id, "features") + ": ragged rows");
        for (std::size_t c = 0; c < d; ++c) v.features(i, c) = rows[i][c];
    }

    for (auto& a : as<std::vector<std::vector<double>>>(field(j, "annotations", v.id), v.id, "annotations"))
        v.annotations.push_back({std::move(a)});
    for (const auto& cp :
         as<std::vector<std::array<int, 2>>>(field(j, "change_points", v.id), v.id, "change_points"))
        v.change_points.shots.push_back({cp[0], cp[1]});
    v.n_frames_original = as<int>(field(j, "n_frames_original", v.id), v.id, "n_frames_original");
    if (j.contains("picks")) v.picks = as<std::vector<int>>(j["picks"], v.id, "picks");
    if (j.contains("user_summaries")) {
        std::vector<FrameMask> masks;
        for (const auto& row : as<std::vector<std::vector<int>>>(j["user_summaries"], v.id, "user_summaries")) {
            FrameMask m;
            for (int b : row) {
                if (b != 0 && b != 1) throw DomainError(where(v.id, "user_summaries") + ": non-binary entry");
                m.push_back(static_cast<std::uint8_t>(b));
            }
            masks.push_back(std::move(m));
        }
        v.user_summaries = std::move(masks);
    }
    if (j.contains("planted_truth")) v.planted_truth = as<std::vector<double>>(j["planted_truth"], v.id, "planted_truth");
    return v;
}

json video_json(const VideoRecord& v) {
    json j;
    j["id"] = v.id;
    j["n_frames_original"] = v.n_frames_original;
    if (v.picks) j["picks"] = *v.picks;
    json features = json::array();
    for (Eigen::Index i = 0; i < v.features.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < v.features.cols(); ++c) row.push_back(static_cast<float>(v.features(i, c)));
        features.push_back(std::move(row));
    }
    j["features"] = std::move(features);
    json annotations = json::array();
    for (const auto& a : v.annotations) annotations.push_back(a.values);
    j["annotations"] = std::move(annotations);
    json cps = json::array();
    for (const auto& s : v.change_points.shots) cps.push_back({s.start, s.end});
    j["change_points"] = std::move(cps);
    if (v.user_summaries) {
        json masks = json::array();
        for (const auto& m : *v.user_summaries) {
            std::vector<int> row(m.begin(), m.end());
            masks.push_back(row);
        }
        j["user_summaries"] = std::move(masks);
    }
    if (v.planted_truth) j["planted_truth"] = *v.planted_truth;
    return j;
}

} // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
    const json manifest = read_json(dir / "manifest.json");
    Dataset data;
    try {
        data.name = manifest.at("name").get<std::string>();
        data.d_feature = manifest.at("d_feature").get<int>();
    } catch (const json::exception&) {
        throw DataError("manifest.json: missing or invalid 'name' / 'd_feature'");
    }
    if (!manifest.contains("videos") || !manifest["videos"].is_array())
        throw DataError("manifest.json: missing 'videos' list");

    std::set<std::string> seen;
    for (const auto& entry : manifest["videos"]) {
        if (!entry.is_string()) throw DataError("manifest.json: video ids must be strings");
        const std::string id = entry.get<std::string>();
        if (!seen.insert(id).second) throw DataError("duplicate video id '" + id + "'");
        VideoRecord v = parse_video(read_json(dir / (id + ".json")), id);
        v.validate(data.d_feature);
        data.videos.push_back(std::move(v));
    }
    return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["name"] = data.name;
    manifest["d_feature"] = data.d_feature;
    manifest["videos"] = data.ids();
    for (const auto& v : data.videos) {
        v.validate(data.d_feature);
        write_json(video_json(v), dir / (v.id + ".json"));
    }
    write_json(manifest, dir / "manifest.json");
}

// --- splits -----------------------------------------------------------------

SplitSetting parse_split_setting(const std::string& s) {
    if (s == "canonical") return SplitSetting::canonical;
    if (s == "augmented") return SplitSetting::augmented;
    if (s == "transfer") return SplitSetting::transfer;
    if (s == "fpv") return SplitSetting::fpv;
    throw ConfigError("unknown split setting '" + s + "'");
}

std::string to_string(SplitSetting s) {
    switch (s) {
    case SplitSetting::canonical: return "canonical";
    case SplitSetting::augmented: return "augmented";
    case SplitSetting::transfer: return "transfer";
    case SplitSetting::fpv: return "fpv";
    }
    return "unknown";
}

std::vector<SplitManifest> make_splits(const std::vector<std::string>& ids, SplitSetting setting, int n_splits,
                                       double ratio, std::uint64_t seed,
                                       const std::vector<std::string>& auxiliary_ids) {
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
        throw DataError("make_splits: duplicate ids");

    if (setting == SplitSetting::transfer || setting == SplitSetting::fpv) {
        if (ids.empty() || auxiliary_ids.empty())
            throw DataError("make_splits: transfer needs non-empty source and target id lists");
        for (const auto& a : auxiliary_ids)
            if (std::find(ids.begin(), ids.end(), a) != ids.end())
                throw DataError("make_splits: id '" + a + "' is in both source and target");
        SplitManifest m{to_string(setting) + "_0", setting, auxiliary_ids, ids, 0, seed};
        std::sort(m.train_ids.begin(), m.train_ids.end());
        std::sort(m.test_ids.begin(), m.test_ids.end());
        return {m};
    }

    if (n_splits < 1) throw ParameterError("make_splits: n_splits must be >= 1");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ParameterError("make_splits: train ratio must lie in (0, 1)");
    const auto n = static_cast<int>(ids.size());
    const int n_train = static_cast<int>(std::lround(ratio * n));
    if (n_train < 1 || n - n_train < 1)
        throw DataError("make_splits: " + std::to_string(n) + " ids are too few for a " + std::to_string(ratio) +
                        " train ratio");

    Rng rng(seed);
    std::vector<SplitManifest> out;
    for (int k = 0; k < n_splits; ++k) {
        std::vector<std::string> order = ids;
        std::shuffle(order.begin(), order.end(), rng.engine());
        SplitManifest m;
        m.name = to_string(setting) + "_" + std::to_string(k);
        m.setting = setting;
        m.train_ids.assign(order.begin(), order.begin() + n_train);
        m.test_ids.assign(order.begin() + n_train, order.end());
        std::sort(m.train_ids.begin(), m.train_ids.end());
        std::sort(m.test_ids.begin(), m.test_ids.end());
        if (setting == SplitSetting::augmented) m.train_ids.insert(m.train_ids.end(), auxiliary_ids.begin(), auxiliary_ids.end());
        m.split_index = k;
        m.seed = seed;
        out.push_back(std::move(m));
    }
    return out;
}

void write_split(const SplitManifest& split, const std::filesystem::path& path) {
    json j;
    j["name"] = split.name;
    j["setting"] = to_string(split.setting);
    j["train_ids"] = split.train_ids;
    j["test_ids"] = split.test_ids;
    j["split_index"] = split.split_index;
    j["seed"] = split.seed;
    write_json(j, path);
}

SplitManifest read_split(const std::filesystem::path& path) {
    const json j = read_json(path);
    try {
        SplitManifest m;
        m.name = j.at("name").get<std::string>();
        m.setting = parse_split_setting(j.at("setting").get<std::string>());
        m.train_ids = j.at("train_ids").get<std::vector<std::string>>();
        m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
        m.split_index = j.at("split_index").get<int>();
        m.seed = j.at("seed").get<std::uint64_t>();
        if (m.test_ids.empty()) throw DataError(path.string() + ": empty test set");
        for (const auto& t : m.test_ids)
            if (std::find(m.train_ids.begin(), m.train_ids.end(), t) != m.train_ids.end())
                throw DataError(path.string() + ": id '" + t + "' in both train and test");
        return m;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": malformed split manifest: " + e.what());
    }
}

// --- synthetic benchmark ------------------------------------------------------

void SyntheticSpec::validate() const {
    if (n_videos < 1 || frames_per_video < 2 || d_feature < 1 || n_annotators < 1 || n_shots < 1)
        throw ParameterError("synthetic spec: counts must be positive (frames_per_video >= 2)");
    if (n_shots > frames_per_video) throw ParameterError("synthetic spec: more shots than frames");
    if (!(annotator_noise >= 0.0 && annotator_noise <= 0.5))
        throw ParameterError("synthetic spec: annotator_noise must lie in [0, 0.5]");
    if (!(signal_strength >= 0.0) || !(feature_noise >= 0.0))
        throw ParameterError("synthetic spec: signal_strength and feature_noise must be >= 0");
}

namespace {

ShotSegmentation random_shots(int n, int n_shots, Rng& rng) {
    std::vector<int> cuts(n - 1);
    for (int i = 0; i < n - 1; ++i) cuts[i] = i + 1;
    std::shuffle(cuts.begin(), cuts.end(), rng.engine());
    cuts.resize(n_shots - 1);
    std::sort(cuts.begin(), cuts.end());
    ShotSegmentation seg;
    int start = 0;
    for (int c : cuts) {
        seg.shots.push_back({start, c});
        start = c;
    }
    seg.shots.push_back({start, n});
    return seg;
}

} // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const int n = spec.frames_per_video;
    const int d = spec.d_feature;

    // Direction along which importance shows up in the features; shared by every video.
    Rng world(mix_seed(spec.world_seed, fnv1a("world")));
    Eigen::RowVectorXd direction(d);
    for (int c = 0; c < d; ++c) direction[c] = world.normal();
    direction *= std::sqrt(static_cast<double>(d)) / direction.norm();

    Dataset data;
    data.name = "synthetic";
    data.d_feature = d;
    for (int vi = 0; vi < spec.n_videos; ++vi) {
        Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(vi)));
        VideoRecord v;
        v.id = spec.id_prefix + "_" + std::to_string(vi);
        v.change_points = random_shots(n, spec.n_shots, rng);

        std::vector<double> g(n);
        if (spec.importance_profile == ImportanceProfile::blocky) {
            for (const auto& s : v.change_points.shots) {
                const double level = rng.uniform();
                for (int i = s.start; i < s.end; ++i) g[i] = level;
            }
        } else {
            double level = 0.2 + 0.6 * rng.uniform();
            for (int i = 0; i < n; ++i) {
                level = std::clamp(level + 0.08 * rng.normal(), 0.0, 1.0);
                g[i] = level;
            }
        }

        v.features.resize(n, d);
        for (const auto& s : v.change_points.shots) {
            Eigen::RowVectorXd proto(d);
            for (int c = 0; c < d; ++c) proto[c] = rng.normal();
            for (int i = s.start; i < s.end; ++i)
                for (int c = 0; c < d; ++c) {
                    const double value = proto[c] + spec.feature_noise * rng.normal() +
                                         spec.signal_strength * (2.0 * g[i] - 1.0) * direction[c];
                    v.features(i, c) = static_cast<float>(value);
                }
        }

        std::vector<FrameMask> summaries;
        for (int k = 0; k < spec.n_annotators; ++k) {
            RawScores a{std::vector<double>(n)};
            for (const auto& s : v.change_points.shots) {
                const double bias = spec.annotator_noise * rng.normal();
                for (int i = s.start; i < s.end; ++i)
                    a.values[i] = std::clamp(g[i] + bias + spec.annotator_noise * rng.normal(), 0.0, 1.0);
            }
            summaries.push_back(summarize_video(a, v.change_points, 0.15).frame_mask);
            v.annotations.push_back(std::move(a));
        }
        v.user_summaries = std::move(summaries);
        constexpr int kSubsample = 15;
        v.n_frames_original = n * kSubsample;
        std::vector<int> picks(n);
        for (int i = 0; i < n; ++i) picks[i] = i * kSubsample;
        v.picks = std::move(picks);
        v.planted_truth = std::move(g);
        data.videos.push_back(std::move(v));
    }
    return data;
}

} // namespace diffsumm
