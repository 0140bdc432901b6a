#include "diffsumm/cli.hpp"

#include "diffsumm/config.hpp"
#include "diffsumm/errors.hpp"
#include "diffsumm/evaluate.hpp"
#include "diffsumm/parallel.hpp"
#include "diffsumm/summarize.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>

namespace diffsumm {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> assignments;
    std::string seed;
    int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
    if (with_config) cmd->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.assignments, "override a config key (key=value), repeatable");
    cmd->add_option("--seed", c.seed, "run seed (falls back to DIFFSUMM_SEED, then 0)");
}

RunConfig build_config(const Common& c) {
    RunConfig rc;
    if (!c.config_file.empty()) rc.merge_file(c.config_file);
    for (const auto& a : c.assignments) rc.set_assignment(a);
    if (!c.seed.empty()) rc.set("seed", c.seed);
    rc.set("seed", std::to_string(rc.seed())); // stamp the effective seed
    return rc;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void echo_config(const fs::path& dir, const RunConfig& rc) { write_text(dir / "config.txt", rc.dump()); }

// Loads the main dataset plus auxiliary ones into one pool of videos.
Dataset load_pool(const std::string& data_dir, const std::vector<std::string>& aux_dirs,
                  std::vector<std::string>* aux_ids = nullptr) {
    Dataset pool = load_dataset(data_dir);
    const auto ids = pool.ids();
    std::set<std::string> seen(ids.begin(), ids.end());
    for (const auto& dir : aux_dirs) {
        Dataset aux = load_dataset(dir);
        if (aux.d_feature != pool.d_feature)
            throw ShapeError("auxiliary dataset " + dir + " has d_feature " + std::to_string(aux.d_feature) +
                             ", main dataset " + std::to_string(pool.d_feature));
        for (auto& v : aux.videos) {
            if (!seen.insert(v.id).second) throw DataError("video id '" + v.id + "' appears in more than one dataset");
            if (aux_ids) aux_ids->push_back(v.id);
            pool.videos.push_back(std::move(v));
        }
    }
    return pool;
}

std::vector<SplitManifest> splits_for(const Dataset& main, const std::vector<std::string>& aux_ids,
                                      const RunConfig& rc, int n_splits) {
    const double ratio = std::stod(rc.get("split.ratio"));
    const std::uint64_t seed = rc.is_set("split.seed") ? std::stoull(rc.get("split.seed")) : rc.seed();
    return make_splits(main.ids(), rc.split_setting(), n_splits, ratio, seed, aux_ids);
}

struct SplitRun {
    SplitManifest split;
    TrainResult result;
};

std::vector<SplitRun> run_training(const Dataset& pool, const std::vector<SplitManifest>& splits, const RunConfig& rc,
                                   const NoiseSchedule& schedule, const fs::path& out_dir, int jobs,
                                   std::ostream& log) {
    const TrainConfig tc = rc.train();
    const PredictorConfig pc = rc.predictor(pool.d_feature);
    std::vector<SplitRun> runs(splits.size());
    parallel_for(splits.size(), jobs, [&](std::size_t k) {
        const fs::path dir = out_dir.empty() ? fs::path{} : out_dir / fmt::format("split_{}", k);
        if (!dir.empty()) {
            fs::create_directories(dir);
            write_split(splits[k], dir / "split.json");
        }
        runs[k] = {splits[k], train(pool, splits[k], tc, pc, schedule, dir)};
    });
    for (const auto& r : runs) {
        const auto& last = r.result.report.epochs.back();
        log << fmt::format("{}: {} steps, final epoch loss {:.6f}, {:.1f} s\n", r.split.name, r.result.report.steps,
                           last.mean_loss, r.result.report.wall_seconds);
    }
    return runs;
}

std::vector<std::string> parse_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char ch : s) q += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
    return q + "'";
}

std::string find_converter() {
    if (const char* env = std::getenv("DIFFSUMM_CONVERTER"); env && *env) return env;
    const char* path = std::getenv("PATH");
    std::string p = path ? path : "";
    std::size_t start = 0;
    while (start <= p.size()) {
        const auto end = p.find(':', start);
        const fs::path cand = fs::path(p.substr(start, end == std::string::npos ? std::string::npos : end - start)) /
                              "diffsumm-convert";
        std::error_code ec;
        if (fs::is_regular_file(cand, ec)) return cand.string();
        if (end == std::string::npos) break;
        start = end + 1;
    }
    throw IoError("no converter found: set DIFFSUMM_CONVERTER or put diffsumm-convert on PATH");
}

struct EvalTarget {
    fs::path checkpoint;
    SplitManifest split;
};

std::vector<EvalTarget> eval_targets(const std::string& ckpt, const std::string& split_file, const Dataset& pool,
                                     const Dataset& main, int max_splits) {
    std::vector<EvalTarget> out;
    if (fs::is_directory(ckpt)) {
        const std::regex pattern("split_([0-9]+)");
        std::vector<std::pair<int, fs::path>> dirs;
        for (const auto& e : fs::directory_iterator(ckpt)) {
            std::smatch m;
            const std::string name = e.path().filename().string();
            if (e.is_directory() && std::regex_match(name, m, pattern)) dirs.emplace_back(std::stoi(m[1]), e.path());
        }
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw DataError("no split_<k> directories under " + ckpt);
        for (const auto& [k, dir] : dirs) {
            if (max_splits > 0 && static_cast<int>(out.size()) >= max_splits) break;
            out.push_back({dir / "checkpoint.bin", read_split(dir / "split.json")});
        }
    } else {
        SplitManifest s;
        if (!split_file.empty()) s = read_split(split_file);
        else s = {"all", SplitSetting::canonical, {}, main.ids(), 0, 0};
        out.push_back({ckpt, s});
    }
    for (const auto& t : out)
        for (const auto& id : t.split.test_ids) pool.video(id); // fail early on unknown ids
    return out;
}

void write_eval_outputs(const fs::path& dir, const std::vector<EvalReport>& reports, const RunConfig& rc) {
    fs::create_directories(dir);
    std::ostringstream table, json;
    write_metrics_table(reports, table);
    write_metrics_json(reports, rc.dump(), json);
    write_text(dir / "metrics.txt", table.str());
    write_text(dir / "report.json", json.str());
    for (const auto& r : reports)
        for (const auto& v : r.videos) {
            std::ostringstream curve;
            write_score_curve(v, curve);
            write_text(dir / "curves" / r.split_name / (v.id + ".tsv"), curve.str());
        }
    echo_config(dir, rc);
}

std::string fmt_metric(double v) { return std::isfinite(v) ? fmt::format("{:.6f}", v) : "nan"; }

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Diffusion-based video summarization: train, sample, evaluate"};
    app.name("diffsumm");
    app.require_subcommand(1);

    // synth
    Common synth_c;
    std::string synth_spec, synth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-annotator dataset");
    synth->add_option("--spec", synth_spec, "spec file (synth.* keys; the prefix may be omitted)")
        ->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    add_common(synth, synth_c, false);

    // train
    Common train_c;
    std::string train_data, train_out, train_setting;
    std::vector<std::string> train_aux;
    int train_splits = 0;
    auto* train_cmd = app.add_subcommand("train", "train one predictor per split");
    train_cmd->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--aux", train_aux, "auxiliary / source dataset directory, repeatable")
        ->check(CLI::ExistingDirectory);
    train_cmd->add_option("--split-setting", train_setting, "canonical | augmented | transfer | fpv");
    train_cmd->add_option("--splits", train_splits, "number of random splits (default eval.n_splits)");
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--jobs", train_c.jobs, "splits trained in parallel")->check(CLI::PositiveNumber);
    add_common(train_cmd, train_c);

    // sample
    Common sample_c;
    std::string sample_data, sample_ckpt, sample_scorer, sample_out, sample_ids;
    int sample_t = -1;
    auto* sample = app.add_subcommand("sample", "generate importance scores and summaries");
    sample->add_option("--data", sample_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    sample->add_option("--ckpt", sample_ckpt, "checkpoint file (not needed with --t-active 0)");
    sample->add_option("--scorer", sample_scorer, "initializer: repdiv[:bw] | constant:C | oracle:K | file:DIR");
    sample->add_option("--t-active", sample_t, "denoising horizon (default schedule.t_active)");
    sample->add_option("--ids", sample_ids, "comma-separated video ids (default: all)");
    sample->add_option("--out", sample_out, "output directory")->required();
    sample->add_option("--jobs", sample_c.jobs, "videos sampled in parallel")->check(CLI::PositiveNumber);
    add_common(sample, sample_c);

    // eval
    Common eval_c;
    std::string eval_data, eval_ckpt, eval_scorer, eval_protocol, eval_out, eval_split;
    std::vector<std::string> eval_aux;
    int eval_splits = 0, eval_t = -1;
    auto* eval = app.add_subcommand("eval", "evaluate checkpoints, with the scorer-only baseline alongside");
    eval->add_option("--data", eval_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--aux", eval_aux, "additional dataset directory, repeatable")->check(CLI::ExistingDirectory);
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file, or a train output directory")->required();
    eval->add_option("--split", eval_split, "split.json for a single checkpoint file");
    eval->add_option("--scorer", eval_scorer, "initializer spec");
    eval->add_option("--protocol", eval_protocol, "F-score mode: max | avg");
    eval->add_option("--splits", eval_splits, "evaluate at most this many splits");
    eval->add_option("--t-active", eval_t, "denoising horizon (default schedule.t_active)");
    eval->add_option("--out", eval_out, "output directory")->required();
    eval->add_option("--jobs", eval_c.jobs, "videos evaluated in parallel")->check(CLI::PositiveNumber);
    add_common(eval, eval_c);

    // sweep-t
    Common sweep_c;
    std::string sweep_data, sweep_values = "50,100,200,500,1000", sweep_out, sweep_ckpt, sweep_scorer, sweep_setting,
                            sweep_protocol;
    std::vector<std::string> sweep_aux;
    int sweep_splits = 1;
    auto* sweep = app.add_subcommand("sweep-t", "sweep the diffusion horizon T");
    sweep->add_option("--data", sweep_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    sweep->add_option("--aux", sweep_aux, "auxiliary dataset directory, repeatable")->check(CLI::ExistingDirectory);
    sweep->add_option("--values", sweep_values, "comma-separated T values");
    sweep->add_option("--ckpt", sweep_ckpt, "reuse one checkpoint and vary only the sampling horizon");
    sweep->add_option("--scorer", sweep_scorer, "initializer spec");
    sweep->add_option("--protocol", sweep_protocol, "F-score mode: max | avg");
    sweep->add_option("--split-setting", sweep_setting, "canonical | augmented | transfer | fpv");
    sweep->add_option("--splits", sweep_splits, "number of splits per value");
    sweep->add_option("--out", sweep_out, "output directory")->required();
    sweep->add_option("--jobs", sweep_c.jobs, "parallel workers")->check(CLI::PositiveNumber);
    add_common(sweep, sweep_c);

    // schedule
    int sched_base = 1000, sched_active = 200;
    double sched_b0 = 1e-4, sched_b1 = 0.02;
    std::string sched_out;
    auto* sched = app.add_subcommand("schedule", "dump the noise schedule table");
    sched->add_option("--t-base", sched_base, "base schedule length");
    sched->add_option("--t-active", sched_active, "active horizon");
    sched->add_option("--beta-start", sched_b0, "first beta");
    sched->add_option("--beta-end", sched_b1, "last beta");
    sched->add_option("--out", sched_out, "write to a file instead of stdout");

    // convert
    std::string conv_check, conv_in, conv_out, conv_anno;
    auto* convert = app.add_subcommand("convert", "run the external converter, or check a converted dataset");
    convert->add_option("--check", conv_check, "validate a canonical dataset directory")
        ->check(CLI::ExistingDirectory);
    convert->add_option("--in", conv_in, "source archive for the external converter");
    convert->add_option("--out", conv_out, "output dataset directory");
    convert->add_option("--tvsum-anno", conv_anno, "per-annotator score sidecar passed to the converter");

    std::vector<const char*> argv{"diffsumm"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*synth) {
            RunConfig rc;
            if (!synth_spec.empty()) rc.merge_file(synth_spec, "synth");
            for (const auto& a : synth_c.assignments) rc.set_assignment(a, "synth");
            if (!synth_c.seed.empty()) rc.set("seed", synth_c.seed);
            rc.set("seed", std::to_string(rc.seed()));
            const Dataset data = generate_synthetic(rc.synthetic());
            write_dataset(data, synth_out);
            echo_config(synth_out, rc);
            out << fmt::format("seed = {}\nvideos = {}\nout = {}\n", rc.seed(), data.videos.size(), synth_out);
            return 0;
        }

        if (*train_cmd) {
            RunConfig rc = build_config(train_c);
            if (!train_setting.empty()) rc.set("split.setting", train_setting);
            const int n = train_splits > 0 ? train_splits : rc.protocol().n_splits;
            std::vector<std::string> aux_ids;
            const Dataset main = load_dataset(train_data);
            const Dataset pool = load_pool(train_data, train_aux, &aux_ids);
            const auto splits = splits_for(main, aux_ids, rc, n);
            fs::create_directories(train_out);
            echo_config(train_out, rc);
            out << fmt::format("seed = {}\n", rc.seed());
            run_training(pool, splits, rc, rc.schedule(), train_out, train_c.jobs, out);
            return 0;
        }

        if (*sample) {
            RunConfig rc = build_config(sample_c);
            if (!sample_scorer.empty()) rc.set("scorer", sample_scorer);
            if (sample_t >= 0) rc.set("schedule.t_active", std::to_string(sample_t));
            const NoiseSchedule schedule = rc.schedule();
            const ScorerSpec scorer = rc.scorer();
            const Dataset data = load_dataset(sample_data);

            std::optional<PredictorParams> params;
            if (!sample_ckpt.empty()) params = load_checkpoint(sample_ckpt).params;
            else if (schedule.t_active() > 0)
                throw ConfigError("sample: --ckpt is required unless --t-active is 0");
            if (params && params->config.d_feature != data.d_feature)
                throw ShapeError("checkpoint d_feature does not match the dataset");

            std::vector<const VideoRecord*> videos;
            if (sample_ids.empty())
                for (const auto& v : data.videos) videos.push_back(&v);
            else
                for (const auto& id : parse_list(sample_ids)) videos.push_back(&data.video(id));

            const double ratio = rc.protocol().summary_ratio;
            const std::uint64_t seed = rc.is_set("eval.seed") ? std::stoull(rc.get("eval.seed")) : rc.seed();
            const NoisePredictor predictor = [&params](const NoisyScores& x, const FrameFeatures& f, int t) {
                return predict_noise(*params, x, f, t);
            };
            std::vector<RawScores> scores(videos.size());
            std::vector<SummarySelection> picks(videos.size());
            parallel_for(videos.size(), sample_c.jobs, [&](std::size_t i) {
                const VideoRecord& v = *videos[i];
                const RawScores init = score_video(scorer, v);
                Rng rng(video_seed(seed, v.id));
                scores[i] = generate_scores(schedule, predictor, v.features, init, rng);
                picks[i] = summarize_video(scores[i], v.change_points, ratio);
            });
            std::ostringstream summaries;
            fs::create_directories(fs::path(sample_out) / "scores");
            for (std::size_t i = 0; i < videos.size(); ++i) {
                write_score_file(fs::path(sample_out) / "scores" / (videos[i]->id + ".txt"), videos[i]->id, scores[i]);
                write_summary(summaries, videos[i]->id, videos[i]->change_points, picks[i]);
            }
            write_text(fs::path(sample_out) / "summaries.txt", summaries.str());
            echo_config(sample_out, rc);
            out << fmt::format("seed = {}\nvideos = {}\nt_active = {}\nscorer = {}\n", seed, videos.size(),
                               schedule.t_active(), to_string(scorer));
            return 0;
        }

        if (*eval) {
            RunConfig rc = build_config(eval_c);
            if (!eval_scorer.empty()) rc.set("scorer", eval_scorer);
            if (!eval_protocol.empty()) rc.set("eval.fscore_mode", eval_protocol);
            if (eval_t >= 0) rc.set("schedule.t_active", std::to_string(eval_t));
            const Dataset main = load_dataset(eval_data);
            const Dataset pool = load_pool(eval_data, eval_aux);
            const auto targets = eval_targets(eval_ckpt, eval_split, pool, main, eval_splits);
            const std::uint64_t seed = rc.is_set("eval.seed") ? std::stoull(rc.get("eval.seed")) : rc.seed();
            std::vector<EvalReport> reports;
            for (const auto& t : targets) {
                const Checkpoint ck = load_checkpoint(t.checkpoint);
                reports.push_back(evaluate_checkpoint(pool, t.split, ck.params, rc.scorer(), rc.schedule(),
                                                      rc.protocol(), {seed, eval_c.jobs}));
            }
            write_eval_outputs(eval_out, reports, rc);
            out << fmt::format("seed = {}\n", seed);
            write_metrics_table(reports, out);
            return 0;
        }

        if (*sweep) {
            RunConfig rc = build_config(sweep_c);
            if (!sweep_scorer.empty()) rc.set("scorer", sweep_scorer);
            if (!sweep_protocol.empty()) rc.set("eval.fscore_mode", sweep_protocol);
            if (!sweep_setting.empty()) rc.set("split.setting", sweep_setting);
            std::vector<int> values;
            for (const auto& v : parse_list(sweep_values)) {
                try {
                    values.push_back(std::stoi(v));
                } catch (const std::exception&) {
                    throw ConfigError("--values: '" + v + "' is not an integer");
                }
            }
            if (values.empty()) throw ConfigError("--values is empty");
            std::vector<std::string> aux_ids;
            const Dataset main = load_dataset(sweep_data);
            const Dataset pool = load_pool(sweep_data, sweep_aux, &aux_ids);
            const std::uint64_t seed = rc.is_set("eval.seed") ? std::stoull(rc.get("eval.seed")) : rc.seed();
            fs::create_directories(sweep_out);
            echo_config(sweep_out, rc);

            std::string table = "t_active\tfscore\tkendall_tau\tspearman_rho\tkendall_tau_truth\tspearman_rho_truth\n";
            double best_tau = -2.0;
            int best_t = 0;
            for (int T : values) {
                RunConfig run = rc;
                run.set("schedule.t_active", std::to_string(T));
                run.set("train.t_active", std::to_string(T));
                const fs::path dir = fs::path(sweep_out) / fmt::format("t_{}", T);
                std::vector<std::pair<PredictorParams, SplitManifest>> models;
                if (!sweep_ckpt.empty()) {
                    for (const auto& t : eval_targets(sweep_ckpt, {}, pool, main, sweep_splits))
                        models.emplace_back(load_checkpoint(t.checkpoint).params, t.split);
                } else {
                    const auto splits = splits_for(main, aux_ids, run, sweep_splits);
                    for (auto& r : run_training(pool, splits, run, run.schedule(), dir, sweep_c.jobs, out))
                        models.emplace_back(std::move(r.result.params), r.split);
                }
                std::vector<EvalReport> reports;
                for (const auto& [params, split] : models)
                    reports.push_back(evaluate_checkpoint(pool, split, params, run.scorer(), run.schedule(),
                                                          run.protocol(), {seed, sweep_c.jobs}));
                write_eval_outputs(dir, reports, run);
                const ScoreMetrics m = aggregate_splits(reports);
                table += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", T, fmt_metric(m.fscore), fmt_metric(m.kendall),
                                     fmt_metric(m.spearman), fmt_metric(m.kendall_truth),
                                     fmt_metric(m.spearman_truth));
                const double tau = std::isfinite(m.kendall_truth) ? m.kendall_truth : m.kendall;
                if (std::isfinite(tau) && tau > best_tau) {
                    best_tau = tau;
                    best_t = T;
                }
            }
            write_text(fs::path(sweep_out) / "sweep.tsv", table);
            out << fmt::format("seed = {}\n", seed) << table << fmt::format("best_t_active = {}\n", best_t);
            return 0;
        }

        if (*sched) {
            const NoiseSchedule s = build_schedule(sched_base, sched_b0, sched_b1, sched_active);
            if (sched_out.empty()) {
                write_schedule_table(s, out);
            } else {
                std::ostringstream table;
                write_schedule_table(s, table);
                write_text(sched_out, table.str());
            }
            return 0;
        }

        if (*convert) {
            std::string target = conv_check;
            if (!conv_in.empty()) {
                if (conv_out.empty()) throw ConfigError("convert: --in requires --out");
                std::string cmd = shell_quote(find_converter()) + " --in " + shell_quote(conv_in) + " --out " +
                                  shell_quote(conv_out);
                if (!conv_anno.empty()) cmd += " --tvsum-anno " + shell_quote(conv_anno);
                if (const int rc = std::system(cmd.c_str()); rc != 0)
                    throw IoError("converter exited with status " + std::to_string(rc));
                target = conv_out;
            }
            if (target.empty()) throw ConfigError("convert: give --check DIR or --in FILE --out DIR");
            const Dataset d = load_dataset(target);
            long frames = 0;
            std::size_t with_summaries = 0;
            for (const auto& v : d.videos) {
                frames += v.frame_count();
                with_summaries += v.user_summaries.has_value();
            }
            out << fmt::format("dataset = {}\nvideos = {}\nd_feature = {}\nframes = {}\nvideos_with_user_summaries = "
                               "{}\nstatus = ok\n",
                               d.name, d.videos.size(), d.d_feature, frames, with_summaries);
            return 0;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

} // namespace diffsumm
