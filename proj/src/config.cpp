#include "diffsumm/config.hpp"

#include "diffsumm/errors.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace diffsumm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) { return fmt::format("{}", v); }

template <class T> T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

} // namespace

RunConfig::RunConfig() {
    const TrainConfig tc;
    const PredictorConfig pc;
    const EvalProtocol ep;
    const SyntheticSpec ss;
    values_ = {
        {"seed", "0"},
        {"train.epochs", std::to_string(tc.epochs)},
        {"train.warmup_epochs", std::to_string(tc.warmup_epochs)},
        {"train.base_lr", fmt_double(tc.base_lr)},
        {"train.weight_decay", fmt_double(tc.weight_decay)},
        {"train.t_active", std::to_string(tc.t_active)},
        {"train.seed", "0"},
        {"train.checkpoint_every", std::to_string(tc.checkpoint_every)},
        {"train.shuffle", "true"},
        {"predictor.d_model", std::to_string(pc.d_model)},
        {"predictor.n_layers", std::to_string(pc.n_layers)},
        {"predictor.n_heads", std::to_string(pc.n_heads)},
        {"predictor.d_ff", std::to_string(pc.d_ff)},
        {"predictor.t_embed_dim", "0"}, // 0: follow d_model
        {"predictor.self_attention", pc.self_attention ? "true" : "false"},
        {"predictor.positional_embedding", pc.positional_embedding ? "true" : "false"},
        {"predictor.position_scale", fmt_double(pc.position_scale)},
        {"predictor.seed", "0"},
        {"eval.fscore_mode", to_string(ep.fscore_mode)},
        {"eval.n_splits", std::to_string(ep.n_splits)},
        {"eval.require_fscore", ep.require_fscore ? "true" : "false"},
        {"eval.summary_ratio", fmt_double(ep.summary_ratio)},
        {"eval.seed", "0"},
        {"scorer", "repdiv"},
        {"scorer.window", "10"},
        {"scorer.seed", "0"},
        {"schedule.t_base", "1000"},
        {"schedule.beta_start", "0.0001"},
        {"schedule.beta_end", "0.02"},
        {"schedule.t_active", "200"},
        {"split.setting", "canonical"},
        {"split.ratio", "0.8"},
        {"split.seed", "0"},
        {"synth.n_videos", std::to_string(ss.n_videos)},
        {"synth.frames_per_video", std::to_string(ss.frames_per_video)},
        {"synth.d_feature", std::to_string(ss.d_feature)},
        {"synth.n_annotators", std::to_string(ss.n_annotators)},
        {"synth.annotator_noise", fmt_double(ss.annotator_noise)},
        {"synth.n_shots", std::to_string(ss.n_shots)},
        {"synth.importance_profile", "blocky"},
        {"synth.seed", "0"},
        {"synth.world_seed", "0"},
        {"synth.signal_strength", fmt_double(ss.signal_strength)},
        {"synth.feature_noise", fmt_double(ss.feature_noise)},
        {"synth.id_prefix", ss.id_prefix},
    };
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
    explicit_[key] = true;
}

namespace {

std::string qualify(const std::map<std::string, std::string>& known, std::string key, const std::string& section) {
    if (!section.empty() && !known.count(key) && known.count(section + "." + key)) key = section + "." + key;
    return key;
}

} // namespace

void RunConfig::set_assignment(const std::string& assignment, const std::string& default_section) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(qualify(values_, trim(assignment.substr(0, eq)), default_section), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge_text(const std::string& text, const std::string& origin, const std::string& default_section) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = qualify(values_, trim(line.substr(0, eq)), default_section);
        try {
            set(key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void RunConfig::merge_file(const std::filesystem::path& path, const std::string& default_section) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    merge_text(s.str(), path.string(), default_section);
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

bool RunConfig::is_set(const std::string& key) const { return explicit_.count(key) > 0; }

std::string RunConfig::dump() const {
    std::string out;
    // Unset section seeds are shown as the run seed they resolve to.
    for (const auto& [k, v] : values_) {
        const bool inherited = k.ends_with(".seed") && !is_set(k);
        out += k + " = " + (inherited ? std::to_string(seed()) : v) + "\n";
    }
    return out;
}

std::uint64_t fallback_seed() {
    if (const char* env = std::getenv("DIFFSUMM_SEED")) {
        const std::string s = env;
        if (!s.empty()) return parse_number<std::uint64_t>("DIFFSUMM_SEED", s);
    }
    return 0;
}

std::uint64_t RunConfig::seed() const {
    return is_set("seed") ? parse_number<std::uint64_t>("seed", get("seed")) : fallback_seed();
}

namespace {

// Section seeds default to the run seed unless set explicitly.
std::uint64_t section_seed(const RunConfig& rc, const std::string& key) {
    return rc.is_set(key) ? parse_number<std::uint64_t>(key, rc.get(key)) : rc.seed();
}

} // namespace

TrainConfig RunConfig::train() const {
    TrainConfig c;
    c.epochs = parse_number<int>("train.epochs", get("train.epochs"));
    c.warmup_epochs = parse_number<int>("train.warmup_epochs", get("train.warmup_epochs"));
    c.base_lr = parse_number<double>("train.base_lr", get("train.base_lr"));
    c.weight_decay = parse_number<double>("train.weight_decay", get("train.weight_decay"));
    c.t_active = parse_number<int>("train.t_active", get("train.t_active"));
    c.seed = section_seed(*this, "train.seed");
    c.checkpoint_every = parse_number<int>("train.checkpoint_every", get("train.checkpoint_every"));
    c.shuffle = parse_bool("train.shuffle", get("train.shuffle"));
    c.validate();
    return c;
}

PredictorConfig RunConfig::predictor(int d_feature) const {
    PredictorConfig c;
    c.d_model = parse_number<int>("predictor.d_model", get("predictor.d_model"));
    c.n_layers = parse_number<int>("predictor.n_layers", get("predictor.n_layers"));
    c.n_heads = parse_number<int>("predictor.n_heads", get("predictor.n_heads"));
    c.d_ff = parse_number<int>("predictor.d_ff", get("predictor.d_ff"));
    const int te = parse_number<int>("predictor.t_embed_dim", get("predictor.t_embed_dim"));
    c.t_embed_dim = te == 0 ? c.d_model : te;
    c.self_attention = parse_bool("predictor.self_attention", get("predictor.self_attention"));
    c.positional_embedding = parse_bool("predictor.positional_embedding", get("predictor.positional_embedding"));
    c.position_scale = parse_number<double>("predictor.position_scale", get("predictor.position_scale"));
    c.seed = section_seed(*this, "predictor.seed");
    c.d_feature = d_feature;
    c.validate();
    return c;
}

EvalProtocol RunConfig::protocol() const {
    EvalProtocol p;
    p.fscore_mode = parse_fscore_mode(get("eval.fscore_mode"));
    p.n_splits = parse_number<int>("eval.n_splits", get("eval.n_splits"));
    p.require_fscore = parse_bool("eval.require_fscore", get("eval.require_fscore"));
    p.summary_ratio = parse_number<double>("eval.summary_ratio", get("eval.summary_ratio"));
    if (p.n_splits < 1) throw ConfigError("eval.n_splits must be >= 1");
    if (!(p.summary_ratio > 0.0 && p.summary_ratio <= 1.0)) throw ConfigError("eval.summary_ratio must lie in (0, 1]");
    return p;
}

ScorerSpec RunConfig::scorer() const {
    ScorerSpec s = parse_scorer(get("scorer"));
    s.window = parse_number<int>("scorer.window", get("scorer.window"));
    s.seed = section_seed(*this, "scorer.seed");
    s.validate();
    return s;
}

NoiseSchedule RunConfig::schedule() const {
    return NoiseSchedule(parse_number<int>("schedule.t_base", get("schedule.t_base")),
                         parse_number<double>("schedule.beta_start", get("schedule.beta_start")),
                         parse_number<double>("schedule.beta_end", get("schedule.beta_end")),
                         parse_number<int>("schedule.t_active", get("schedule.t_active")));
}

SyntheticSpec RunConfig::synthetic() const {
    SyntheticSpec s;
    s.n_videos = parse_number<int>("synth.n_videos", get("synth.n_videos"));
    s.frames_per_video = parse_number<int>("synth.frames_per_video", get("synth.frames_per_video"));
    s.d_feature = parse_number<int>("synth.d_feature", get("synth.d_feature"));
    s.n_annotators = parse_number<int>("synth.n_annotators", get("synth.n_annotators"));
    s.annotator_noise = parse_number<double>("synth.annotator_noise", get("synth.annotator_noise"));
    s.n_shots = parse_number<int>("synth.n_shots", get("synth.n_shots"));
    const auto& profile = get("synth.importance_profile");
    if (profile == "blocky") s.importance_profile = ImportanceProfile::blocky;
    else if (profile == "smooth") s.importance_profile = ImportanceProfile::smooth;
    else throw ConfigError("synth.importance_profile must be blocky or smooth");
    s.seed = section_seed(*this, "synth.seed");
    s.world_seed = parse_number<std::uint64_t>("synth.world_seed", get("synth.world_seed"));
    s.signal_strength = parse_number<double>("synth.signal_strength", get("synth.signal_strength"));
    s.feature_noise = parse_number<double>("synth.feature_noise", get("synth.feature_noise"));
    s.id_prefix = get("synth.id_prefix");
    s.validate();
    return s;
}

SplitSetting RunConfig::split_setting() const { return parse_split_setting(get("split.setting")); }

} // namespace diffsumm
