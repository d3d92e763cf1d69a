// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0
//
// crmlab command-line front end. Each subcommand runs one experiment and
// writes schema-versioned artifacts plus a `<output>.config` snapshot; re-running
// any subcommand from its snapshot (flags > config file > defaults, with
// CRM_LAB_SEED as the seed fallback) reproduces the artifacts byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"

#include "crmlab/env.hpp"
#include "crmlab/metrics.hpp"
#include "crmlab/rl.hpp"
#include "crmlab/rm.hpp"
#include "crmlab/rng.hpp"
#include "crmlab/search.hpp"
#include "experiments.hpp"

namespace {

using crmlab::exp::fmt_double;
using nlohmann::ordered_json;

constexpr const char* kScoresSchema = "# schema=crmlab.scores.v1";
constexpr const char* kLossSchema = "# schema=crmlab.rm_loss.v1";
constexpr const char* kSearchSchema = "# schema=crmlab.search.v1";
constexpr const char* kRlSchema = "# schema=crmlab.rl_metrics.v1";
constexpr const char* kTextMetricsSchema = "# schema=crmlab.text_metrics.v1";
constexpr const char* kAblationLzSchema = "# schema=crmlab.ablation_lz.v1";
constexpr const char* kAblationVariantSchema = "# schema=crmlab.ablation_variant.v1";

void apply_threads(int threads) {
    if (threads < 0) {
        throw std::invalid_argument("--threads must be >= 0 (0 keeps the runtime default)");
    }
#ifdef _OPENMP
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
#else
    (void)threads;
#endif
}

void write_snapshot(const CLI::App& sub, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write config snapshot: " + path);
    }
    out << sub.config_to_str(true, false);
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write output file: " + path);
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read file: " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::string item;
    std::istringstream stream(csv);
    while (std::getline(stream, item, ',')) {
        if (item.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::size_t used = 0;
        const double v = std::stod(item, &used);
        if (used == 0) {
            throw std::invalid_argument("cannot parse number from list item '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    for (double v : parse_double_list(csv)) {
        const int i = static_cast<int>(std::llround(v));
        if (static_cast<double>(i) != v) {
            throw std::invalid_argument("expected an integer list, got " + csv);
        }
        out.push_back(i);
    }
    return out;
}

std::vector<std::string> parse_path_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream stream(csv);
    while (std::getline(stream, item, ',')) {
        if (item.find_first_not_of(" \t") != std::string::npos) {
            out.push_back(item);
        }
    }
    return out;
}

// CLI11 2.4 never applies a config file attached to a subcommand, so config
// handling is done by hand: `key=value` lines become `--key value` tokens
// injected right after the subcommand name. Explicit flags come later in the
// stream and win under the take-last policy, giving flags > file > defaults.
std::vector<std::string> config_tokens(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#' || line[start] == '[') {
            continue;
        }
        const std::size_t eq = line.find('=', start);
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ": expected key=value, got '" + line + "'");
        }
        std::string key = line.substr(start, eq - start);
        key.erase(key.find_last_not_of(" \t") + 1);
        std::string value = line.substr(eq + 1);
        const std::size_t vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? std::string() : value.substr(vstart);
        if (!value.empty()) {
            value.erase(value.find_last_not_of(" \t") + 1);
        }
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        tokens.push_back("--" + key);
        tokens.push_back(value);
    }
    return tokens;
}

// Expands `--config <file>` / `--config=<file>` into option tokens. The
// first token must be the subcommand name; injected tokens follow it.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) {
                throw std::runtime_error("--config expects a file path");
            }
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!config_path.empty()) {
        if (args.empty()) {
            throw std::runtime_error("--config requires a subcommand");
        }
        const auto injected = config_tokens(config_path);
        args.insert(args.begin() + 1, injected.begin(), injected.end());
    }
    return args;
}

// Shared world knobs. Every subcommand that builds a world takes the same
// flags; the subcommand seed doubles as the world seed so one value pins the
// entire pipeline.
struct WorldOpts {
    int questions = 256;
    double theta_min = 0.05;
    double theta_max = 0.5;
    int t_max = 8;
    int actions = 5;
    double noise = 0.1;
};

void add_world_options(CLI::App* sub, WorldOpts& w) {
    sub->add_option("--questions", w.questions, "Questions in the synthetic world")
        ->capture_default_str();
    sub->add_option("--theta-min", w.theta_min, "Minimum question difficulty")
        ->capture_default_str();
    sub->add_option("--theta-max", w.theta_max, "Maximum question difficulty")
        ->capture_default_str();
    sub->add_option("--t-max", w.t_max, "Hard step cap per trajectory")
        ->capture_default_str();
    sub->add_option("--actions", w.actions, "Action count (SOLVE, REPEAT, WORK variants)")
        ->capture_default_str();
    sub->add_option("--noise", w.noise, "Feature noise standard deviation")
        ->capture_default_str();
}

crmlab::env::WorldConfig world_from(const WorldOpts& w, std::uint64_t seed) {
    crmlab::env::WorldConfig cfg;
    cfg.num_questions = w.questions;
    cfg.theta_min = w.theta_min;
    cfg.theta_max = w.theta_max;
    cfg.t_max = w.t_max;
    cfg.num_actions = w.actions;
    cfg.feature_noise = w.noise;
    cfg.seed = seed;
    return cfg;
}

CLI::Option* add_seed_option(CLI::App* sub, std::uint64_t& seed) {
    return sub->add_option("--seed", seed, "Master seed (CRM_LAB_SEED as fallback)")
        ->envname("CRM_LAB_SEED")
        ->capture_default_str();
}

CLI::Option* add_threads_option(CLI::App* sub, int& threads) {
    // Execution detail, not experiment config: kept out of snapshots so a
    // re-run under a different thread count still produces identical bytes.
    return sub->add_option("--threads", threads, "Worker threads; 0 = runtime default")
        ->capture_default_str()
        ->configurable(false);
}

void add_config_option(CLI::App* sub) {
    sub->set_config("--config", "", "key = value config file (flags override it)");
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataOpts {
    WorldOpts world;
    int n = 2000;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
};

void run_gen_data(const CLI::App& sub, const GenDataOpts& o) {
    apply_threads(o.threads);
    const auto cfg = world_from(o.world, o.seed);
    const auto world = crmlab::env::World::build(cfg);
    const auto policy = crmlab::env::behavior_policy(cfg);
    const auto data = crmlab::env::make_dataset(world, policy, o.n, o.seed);
    crmlab::env::save_jsonl(o.out, data);
    write_snapshot(sub, o.out + ".config");

    int positives = 0;
    for (const auto& t : data) {
        positives += t.label;
    }
    std::cout << "wrote " << data.size() << " trajectories to " << o.out << " ("
              << positives << " correct, " << data.size() - positives << " incorrect)\n";
}

// ---------------------------------------------------------------------------
// train-rm

struct TrainRmOpts {
    std::string data;
    std::string kind = "crm";
    double lz_fraction = 1.0;
    int epochs = 40;
    int batch = 32;
    double lr = 1e-3;
    int hidden = 32;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
    std::string loss_csv;  // defaults to <out>.loss.csv
};

void run_train_rm(const CLI::App& sub, const TrainRmOpts& o) {
    apply_threads(o.threads);
    const auto kind = crmlab::rm::model_kind_from_string(o.kind);
    const auto data = crmlab::env::load_jsonl(o.data);

    crmlab::rm::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.learning_rate = o.lr;
    cfg.lz_fraction = o.lz_fraction;
    cfg.hidden_dim = o.hidden;
    cfg.seed = o.seed;

    const auto result = crmlab::rm::train_reward_model(kind, data, cfg);
    result.model.save_json(o.out);

    const std::string loss_path = o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv;
    auto csv = open_output(loss_path);
    csv << kLossSchema << "\n" << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        csv << e + 1 << "," << fmt_double(result.epoch_losses[e]) << "\n";
    }
    write_snapshot(sub, o.out + ".config");
    std::cout << "trained " << o.kind << " model on " << data.size() << " trajectories; "
              << "first-epoch loss " << fmt_double(result.epoch_losses.front())
              << ", last " << fmt_double(result.epoch_losses.back()) << "\n";
}

// ---------------------------------------------------------------------------
// score

struct ScoreOpts {
    std::string model;
    std::string data;
    std::string out;
    int threads = 0;
};

void run_score(const CLI::App& sub, const ScoreOpts& o) {
    apply_threads(o.threads);
    const auto model = crmlab::rm::HazardPredictor::load_json(o.model);
    const auto data = crmlab::env::load_jsonl(o.data);

    auto csv = open_output(o.out);
    csv << kScoresSchema << "\n" << "index,question_id,label,score,z_true,z_pred\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& traj = data[i];
        const int z_true = traj.first_error ? *traj.first_error : -1;
        const int z_pred = model.kind() == crmlab::rm::ModelKind::kCrm
                               ? model.locate_first_error(traj)
                               : -1;
        csv << i << "," << traj.question_id << "," << traj.label << ","
            << fmt_double(model.score(traj)) << "," << z_true << "," << z_pred << "\n";
    }
    write_snapshot(sub, o.out + ".config");
    std::cout << "scored " << data.size() << " trajectories to " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// bon / beam

struct SearchOpts {
    WorldOpts world;
    std::string model;
    std::string scorer;  // optional; must match the checkpoint kind when given
    std::string n_list = "4,8,20,100";
    int beam = 2;
    int eval_questions = 50;
    int max_steps = 30;
    int max_tokens = 4096;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
};

void run_search(const CLI::App& sub, const SearchOpts& o, bool is_beam) {
    apply_threads(o.threads);
    const auto model = crmlab::rm::HazardPredictor::load_json(o.model);
    if (!o.scorer.empty() &&
        crmlab::rm::model_kind_from_string(o.scorer) != model.kind()) {
        throw std::invalid_argument("--scorer '" + o.scorer + "' does not match checkpoint kind '" +
                                    crmlab::rm::to_string(model.kind()) + "'");
    }
    const auto ns = parse_int_list(o.n_list);
    if (ns.empty()) {
        throw std::invalid_argument("--n lists no sampling sizes");
    }
    for (const int n : ns) {
        if (n < 1 || (is_beam && (o.beam < 1 || n % o.beam != 0))) {
            throw std::invalid_argument("--n entries must be >= 1 and divisible by --beam");
        }
    }
    const auto cfg = world_from(o.world, o.seed);
    const auto world = crmlab::env::World::build(cfg);
    const auto policy = crmlab::env::behavior_policy(cfg);
    if (o.eval_questions < 1 || o.eval_questions > cfg.num_questions) {
        throw std::invalid_argument("--eval-questions must lie in [1, questions]");
    }
    const crmlab::search::Scorer scorer = [&model](const crmlab::env::Trajectory& t) {
        return model.score(t);
    };

    auto csv = open_output(o.out);
    csv << kSearchSchema << "\n" << "method,n,beam,accuracy,mean_score\n";
    const char* method = is_beam ? "beam" : "bon";
    for (const int n : ns) {
        const int beam_width = is_beam ? o.beam : n;
        int correct = 0;
        double score_sum = 0.0;
        for (int q = 0; q < o.eval_questions; ++q) {
            const std::uint64_t run_seed =
                crmlab::mix_seed(o.seed, static_cast<std::uint64_t>(n),
                                 static_cast<std::uint64_t>(q));
            if (is_beam) {
                crmlab::search::BeamConfig bc;
                bc.width = o.beam;
                bc.total = n;
                bc.step_cap = o.max_steps;
                bc.max_tokens = o.max_tokens;
                const auto res =
                    crmlab::search::beam_search(world, policy, scorer, q, bc, run_seed);
                correct += res.best.label;
                score_sum += res.best_score;
            } else {
                const auto res = crmlab::search::best_of_n(
                    world, policy, scorer, q, n, run_seed, o.max_steps, o.max_tokens);
                correct += res.best.label;
                score_sum += res.best_score;
            }
        }
        csv << method << "," << n << "," << beam_width << ","
            << fmt_double(static_cast<double>(correct) / o.eval_questions) << ","
            << fmt_double(score_sum / o.eval_questions) << "\n";
    }
    write_snapshot(sub, o.out + ".config");
    std::cout << method << " accuracy rows for n in {" << o.n_list << "} written to "
              << o.out << "\n";
}

// ---------------------------------------------------------------------------
// rl

struct RlOpts {
    WorldOpts world;
    std::string reward = "crm";
    std::string variant = "log";
    std::string model;
    std::string out;
    int iterations = 200;
    int prompts = 64;
    int group_size = 4;
    int max_tokens = 256;
    int ppo_epochs = 2;
    double clip_eps = 0.2;
    double kl_beta = 1e-3;
    double lr = 1e-2;
    int eval_questions = 32;
    std::uint64_t seed = 0;
    int threads = 0;
};

void run_rl(const CLI::App& sub, const RlOpts& o) {
    apply_threads(o.threads);
    crmlab::rl::RlConfig cfg;
    cfg.iterations = o.iterations;
    cfg.prompts_per_iter = o.prompts;
    cfg.group_size = o.group_size;
    cfg.max_tokens = o.max_tokens;
    cfg.ppo_epochs = o.ppo_epochs;
    cfg.clip_eps = o.clip_eps;
    cfg.kl_beta = o.kl_beta;
    cfg.learning_rate = o.lr;
    cfg.eval_questions = o.eval_questions;
    cfg.seed = o.seed;
    cfg.source = crmlab::rl::reward_source_from_string(o.reward);
    if (o.variant == "log") {
        cfg.variant = crmlab::hazard::RewardVariant::kLog;
    } else if (o.variant == "linear") {
        cfg.variant = crmlab::hazard::RewardVariant::kLinear;
    } else {
        throw std::invalid_argument("--variant must be 'log' or 'linear'");
    }

    const bool needs_model = cfg.source != crmlab::rl::RewardSource::kVerifier;
    if (needs_model && o.model.empty()) {
        throw std::invalid_argument("--model is required for reward source '" + o.reward + "'");
    }
    std::optional<crmlab::rm::HazardPredictor> model;
    if (needs_model) {
        model = crmlab::rm::HazardPredictor::load_json(o.model);
    }

    const auto wcfg = world_from(o.world, o.seed);
    const auto world = crmlab::env::World::build(wcfg);
    const auto initial = crmlab::env::Policy::uniform(wcfg);
    const auto result =
        crmlab::rl::rl_train(world, initial, model ? &*model : nullptr, cfg);
    crmlab::rl::write_metrics_csv(o.out, result.rows);
    write_snapshot(sub, o.out + ".config");
    std::cout << "rl (" << o.reward << ", " << o.variant << "): accuracy "
              << fmt_double(result.rows.front().eval_accuracy) << " -> "
              << fmt_double(result.rows.back().eval_accuracy) << ", repeat "
              << fmt_double(result.rows.back().repeat_score) << "; metrics in " << o.out
              << "\n";
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsOpts {
    std::string text;
    std::string out;  // optional CSV
    int threads = 0;
};

void run_metrics(const CLI::App& sub, const MetricsOpts& o) {
    apply_threads(o.threads);
    const std::string raw = read_file(o.text);
    const auto stream = crmlab::text::normalize_text(raw);
    const double repeat = crmlab::text::repeat_score(stream);
    const double reflection = crmlab::text::self_reflection_score(raw);
    std::cout << "repeat_score=" << fmt_double(repeat) << "\n"
              << "reflection_score=" << fmt_double(reflection) << "\n";
    if (!o.out.empty()) {
        auto csv = open_output(o.out);
        csv << kTextMetricsSchema << "\n" << "repeat_score,reflection_score\n"
            << fmt_double(repeat) << "," << fmt_double(reflection) << "\n";
        write_snapshot(sub, o.out + ".config");
    }
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
    std::string rl_list;
    std::string search_list;
    std::string loss_list;
    std::string scores_list;
    std::string run_id = "report";
    std::string out;
    int threads = 0;
};

// Splits a schema-versioned CSV into its data lines, enforcing the header.
std::vector<std::string> csv_lines(const std::string& path, const std::string& schema) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line) || line != schema) {
        throw std::runtime_error(path + ": expected schema header '" + schema + "', got '" +
                                 line + "'");
    }
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    if (lines.empty()) {
        throw std::runtime_error(path + ": no rows after the header");
    }
    return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    return fields;
}

void run_report(const CLI::App& sub, const ReportOpts& o) {
    apply_threads(o.threads);
    ordered_json report;
    report["schema"] = "crmlab.report.v1";
    report["run_id"] = o.run_id;
    report["config_snapshot"] = sub.config_to_str(true, false);

    ordered_json series;
    std::optional<double> final_accuracy;
    std::optional<double> summary_auprc;
    std::optional<double> summary_localization;

    series["rl"] = ordered_json::array();
    for (const auto& path : parse_path_list(o.rl_list)) {
        const auto rows = crmlab::rl::read_metrics_csv(path);  // validates schema
        ordered_json entry;
        entry["file"] = path;
        ordered_json cols;
        for (const char* name : {"iteration", "mean_reward", "norm_reward", "mean_length",
                                 "repeat_score", "reflection_score", "eval_accuracy"}) {
            cols[name] = ordered_json::array();
        }
        for (const auto& r : rows) {
            cols["iteration"].push_back(r.iteration);
            cols["mean_reward"].push_back(r.mean_reward);
            cols["norm_reward"].push_back(r.norm_reward);
            cols["mean_length"].push_back(r.mean_length);
            cols["repeat_score"].push_back(r.repeat_score);
            cols["reflection_score"].push_back(r.reflection_score);
            cols["eval_accuracy"].push_back(r.eval_accuracy);
        }
        entry["series"] = std::move(cols);
        series["rl"].push_back(std::move(entry));
        final_accuracy = rows.back().eval_accuracy;
    }

    series["search"] = ordered_json::array();
    for (const auto& path : parse_path_list(o.search_list)) {
        const auto lines = csv_lines(path, kSearchSchema);
        ordered_json entry;
        entry["file"] = path;
        entry["rows"] = ordered_json::array();
        for (std::size_t i = 1; i < lines.size(); ++i) {  // skip column header
            const auto f = split_fields(lines[i]);
            if (f.size() != 5) {
                throw std::runtime_error(path + ": malformed row '" + lines[i] + "'");
            }
            ordered_json row;
            row["method"] = f[0];
            row["n"] = std::stoi(f[1]);
            row["beam"] = std::stoi(f[2]);
            row["accuracy"] = std::stod(f[3]);
            row["mean_score"] = std::stod(f[4]);
            entry["rows"].push_back(std::move(row));
        }
        series["search"].push_back(std::move(entry));
    }

    series["loss"] = ordered_json::array();
    for (const auto& path : parse_path_list(o.loss_list)) {
        const auto lines = csv_lines(path, kLossSchema);
        ordered_json entry;
        entry["file"] = path;
        entry["epoch"] = ordered_json::array();
        entry["loss"] = ordered_json::array();
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto f = split_fields(lines[i]);
            if (f.size() != 2) {
                throw std::runtime_error(path + ": malformed row '" + lines[i] + "'");
            }
            entry["epoch"].push_back(std::stoi(f[0]));
            entry["loss"].push_back(std::stod(f[1]));
        }
        series["loss"].push_back(std::move(entry));
    }

    series["scores"] = ordered_json::array();
    for (const auto& path : parse_path_list(o.scores_list)) {
        const auto lines = csv_lines(path, kScoresSchema);
        std::vector<double> scores;
        std::vector<int> labels;
        int localized = 0;
        int localizable = 0;
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const auto f = split_fields(lines[i]);
            if (f.size() != 6) {
                throw std::runtime_error(path + ": malformed row '" + lines[i] + "'");
            }
            labels.push_back(std::stoi(f[2]));
            scores.push_back(std::stod(f[3]));
            const int z_true = std::stoi(f[4]);
            const int z_pred = std::stoi(f[5]);
            if (z_true > 0 && z_pred > 0) {
                ++localizable;
                localized += z_true == z_pred ? 1 : 0;
            }
        }
        ordered_json entry;
        entry["file"] = path;
        entry["count"] = labels.size();
        entry["auprc"] = nullptr;
        entry["localization_accuracy"] = nullptr;
        try {
            const double a = crmlab::search::auprc(scores, labels);
            entry["auprc"] = a;
            if (!summary_auprc) {
                summary_auprc = a;
            }
        } catch (const std::invalid_argument&) {
            // Degenerate score sets (e.g. no positives) stay null.
        }
        if (localizable > 0) {
            const double loc = static_cast<double>(localized) / localizable;
            entry["localization_accuracy"] = loc;
            if (!summary_localization) {
                summary_localization = loc;
            }
        }
        series["scores"].push_back(std::move(entry));
    }

    report["series"] = std::move(series);
    ordered_json summary;
    summary["final_accuracy"] = final_accuracy ? ordered_json(*final_accuracy) : nullptr;
    summary["auprc"] = summary_auprc ? ordered_json(*summary_auprc) : nullptr;
    summary["localization_accuracy"] =
        summary_localization ? ordered_json(*summary_localization) : nullptr;
    report["summary"] = std::move(summary);

    auto out = open_output(o.out);
    out << report.dump(2) << "\n";
    write_snapshot(sub, o.out + ".config");
    std::cout << "report written to " << o.out << "\n";
}

// ---------------------------------------------------------------------------
// ablate

struct AblateOpts {
    WorldOpts world;
    std::string out_dir;
    std::string lz_list = "0,0.1,0.25,0.5,1.0";
    int n = 2000;
    double heldout = 0.2;
    int epochs = 40;
    int batch = 32;
    double lr = 1e-3;
    int hidden = 32;
    int rl_iterations = 40;
    int rl_prompts = 16;
    int rl_group = 4;
    int rl_max_tokens = 256;
    int rl_eval = 16;
    std::uint64_t seed = 7;
    int threads = 0;
};

void run_ablate(const CLI::App& sub, const AblateOpts& o) {
    apply_threads(o.threads);
    const auto fractions = parse_double_list(o.lz_list);
    if (fractions.empty()) {
        throw std::invalid_argument("--lz lists no fractions to sweep");
    }
    std::filesystem::create_directories(o.out_dir);
    const std::string dir = o.out_dir + "/";

    // Part 1: L_z data-fraction sweep on the standard world.
    const auto cfg = world_from(o.world, o.seed);
    const auto world = crmlab::env::World::build(cfg);
    const auto data =
        crmlab::env::make_dataset(world, crmlab::env::behavior_policy(cfg), o.n, o.seed);
    const auto split = crmlab::exp::split_dataset(data, o.heldout);

    crmlab::rm::TrainConfig tcfg;
    tcfg.epochs = o.epochs;
    tcfg.batch_size = o.batch;
    tcfg.learning_rate = o.lr;
    tcfg.hidden_dim = o.hidden;
    tcfg.seed = o.seed;

    auto lz_csv = open_output(dir + "lz_sweep.csv");
    lz_csv << kAblationLzSchema << "\n" << "lz_fraction,localization_accuracy,auprc\n";
    for (const double fraction : fractions) {
        tcfg.lz_fraction = fraction;
        const auto trained =
            crmlab::rm::train_reward_model(crmlab::rm::ModelKind::kCrm, split.train, tcfg);
        const double loc = crmlab::exp::localization_accuracy(trained.model, split.heldout);
        const double area = crmlab::exp::pooled_auprc(trained.model, split.heldout);
        lz_csv << fmt_double(fraction) << "," << fmt_double(loc) << "," << fmt_double(area)
               << "\n";
        std::cout << "lz_fraction " << fmt_double(fraction) << ": localization "
                  << fmt_double(loc) << ", auprc " << fmt_double(area) << "\n";
    }

    // Part 2: log- vs linear-reward RL on the hacking world, identical seeds.
    const auto hcfg = crmlab::exp::hacking_world(o.seed);
    const auto hworld = crmlab::env::World::build(hcfg);
    const auto hdata = crmlab::env::make_dataset(
        hworld, crmlab::env::behavior_policy(hcfg), o.n, o.seed);
    crmlab::rm::TrainConfig hcfg_train = tcfg;
    hcfg_train.lz_fraction = 1.0;
    const auto hmodel =
        crmlab::rm::train_reward_model(crmlab::rm::ModelKind::kCrm, hdata, hcfg_train);

    crmlab::rl::RlConfig rcfg;
    rcfg.iterations = o.rl_iterations;
    rcfg.prompts_per_iter = o.rl_prompts;
    rcfg.group_size = o.rl_group;
    rcfg.max_tokens = o.rl_max_tokens;
    rcfg.eval_questions = o.rl_eval;
    rcfg.seed = o.seed;
    rcfg.source = crmlab::rl::RewardSource::kCrm;

    auto variant_csv = open_output(dir + "variant_compare.csv");
    variant_csv << kAblationVariantSchema << "\n"
                << "variant,final_accuracy,final_repeat_score\n";
    const auto initial = crmlab::env::Policy::uniform(hcfg);
    for (const auto variant :
         {crmlab::hazard::RewardVariant::kLog, crmlab::hazard::RewardVariant::kLinear}) {
        rcfg.variant = variant;
        const auto result = crmlab::rl::rl_train(hworld, initial, &hmodel.model, rcfg);
        const char* name = variant == crmlab::hazard::RewardVariant::kLog ? "log" : "linear";
        variant_csv << name << "," << fmt_double(result.rows.back().eval_accuracy) << ","
                    << fmt_double(result.rows.back().repeat_score) << "\n";
        std::cout << "variant " << name << ": final accuracy "
                  << fmt_double(result.rows.back().eval_accuracy) << ", repeat "
                  << fmt_double(result.rows.back().repeat_score) << "\n";
    }
    write_snapshot(sub, dir + "ablate.config");
    std::cout << "ablation artifacts in " << o.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crmlab: a desk-scale laboratory for conditional reward modeling"};
    app.require_subcommand(1);
    // Later occurrences override earlier ones, so config-injected tokens
    // (which precede explicit flags) lose to the command line.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // gen-data ---------------------------------------------------------------
    auto gen_opts = std::make_shared<GenDataOpts>();
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a labeled synthetic dataset (JSONL)");
    add_world_options(gen, gen_opts->world);
    gen->add_option("--n", gen_opts->n, "Number of trajectories")->capture_default_str();
    add_seed_option(gen, gen_opts->seed);
    add_threads_option(gen, gen_opts->threads);
    gen->add_option("--out", gen_opts->out, "Output JSONL path")->required();
    add_config_option(gen);
    gen->callback([gen, gen_opts] { run_gen_data(*gen, *gen_opts); });

    // train-rm ---------------------------------------------------------------
    auto train_opts = std::make_shared<TrainRmOpts>();
    CLI::App* train = app.add_subcommand("train-rm", "Train a reward model on a JSONL dataset");
    train->add_option("--data", train_opts->data, "Input JSONL dataset")->required();
    train->add_option("--kind", train_opts->kind, "Model kind: crm, prm, orm")
        ->capture_default_str();
    train->add_option("--lz-fraction", train_opts->lz_fraction,
                      "Fraction of annotated incorrect samples with first-error supervision")
        ->capture_default_str();
    train->add_option("--epochs", train_opts->epochs, "Training epochs")->capture_default_str();
    train->add_option("--batch", train_opts->batch, "Minibatch size")->capture_default_str();
    train->add_option("--lr", train_opts->lr, "Adam learning rate")->capture_default_str();
    train->add_option("--hidden", train_opts->hidden, "Hidden layer width")
        ->capture_default_str();
    add_seed_option(train, train_opts->seed);
    add_threads_option(train, train_opts->threads);
    train->add_option("--out", train_opts->out, "Checkpoint JSON path")->required();
    train->add_option("--loss-csv", train_opts->loss_csv,
                      "Loss curve CSV path (default <out>.loss.csv)");
    add_config_option(train);
    train->callback([train, train_opts] { run_train_rm(*train, *train_opts); });

    // score ------------------------------------------------------------------
    auto score_opts = std::make_shared<ScoreOpts>();
    CLI::App* score = app.add_subcommand("score", "Score a JSONL dataset with a checkpoint");
    score->add_option("--model", score_opts->model, "Checkpoint JSON")->required();
    score->add_option("--data", score_opts->data, "Input JSONL dataset")->required();
    score->add_option("--out", score_opts->out, "Scores CSV path")->required();
    add_threads_option(score, score_opts->threads);
    add_config_option(score);
    score->callback([score, score_opts] { run_score(*score, *score_opts); });

    // bon / beam ---------------------------------------------------------------
    auto bon_opts = std::make_shared<SearchOpts>();
    CLI::App* bon = app.add_subcommand("bon", "Best-of-N accuracy sweep");
    auto beam_opts = std::make_shared<SearchOpts>();
    CLI::App* beam = app.add_subcommand("beam", "Reward-guided beam search accuracy sweep");
    for (auto [sub, opts] : {std::pair{bon, bon_opts}, std::pair{beam, beam_opts}}) {
        add_world_options(sub, opts->world);
        sub->add_option("--model", opts->model, "Checkpoint JSON used as the scorer")
            ->required();
        sub->add_option("--scorer", opts->scorer,
                        "Expected scorer kind (crm, prm, orm); errors on checkpoint mismatch");
        sub->add_option("--n", opts->n_list, "Comma-separated total sampling sizes")
            ->capture_default_str();
        if (sub == beam) {
            sub->add_option("--beam", opts->beam, "Beam width b. Each survivor expands N/b ways")
                ->capture_default_str();
        }
        sub->add_option("--eval-questions", opts->eval_questions,
                        "Questions evaluated (ids 0..count-1)")
            ->capture_default_str();
        sub->add_option("--max-steps", opts->max_steps, "Search step budget")
            ->capture_default_str();
        sub->add_option("--max-tokens", opts->max_tokens, "Search token budget")
            ->capture_default_str();
        add_seed_option(sub, opts->seed);
        add_threads_option(sub, opts->threads);
        sub->add_option("--out", opts->out, "Accuracy-vs-N CSV path")->required();
        add_config_option(sub);
    }
    bon->callback([bon, bon_opts] { run_search(*bon, *bon_opts, false); });
    beam->callback([beam, beam_opts] { run_search(*beam, *beam_opts, true); });

    // rl ----------------------------------------------------------------------
    auto rl_opts = std::make_shared<RlOpts>();
    CLI::App* rl = app.add_subcommand("rl", "Token-level RLOO + PPO-clip policy training");
    add_world_options(rl, rl_opts->world);
    rl->add_option("--reward", rl_opts->reward,
                   "Reward source: crm, prm, verifier, crm+verifier")
        ->capture_default_str();
    rl->add_option("--variant", rl_opts->variant, "Step reward form: log or linear")
        ->capture_default_str();
    rl->add_option("--model", rl_opts->model, "Checkpoint JSON (required unless verifier)");
    rl->add_option("--iterations", rl_opts->iterations, "Training iterations")
        ->capture_default_str();
    rl->add_option("--prompts", rl_opts->prompts, "Prompts per iteration")
        ->capture_default_str();
    rl->add_option("--group-size", rl_opts->group_size, "Responses per prompt (K)")
        ->capture_default_str();
    rl->add_option("--max-tokens", rl_opts->max_tokens, "Token budget per response (M)")
        ->capture_default_str();
    rl->add_option("--ppo-epochs", rl_opts->ppo_epochs, "PPO epochs per iteration")
        ->capture_default_str();
    rl->add_option("--clip-eps", rl_opts->clip_eps, "PPO clip range")->capture_default_str();
    rl->add_option("--kl-beta", rl_opts->kl_beta, "KL penalty weight")->capture_default_str();
    rl->add_option("--lr", rl_opts->lr, "Policy learning rate")->capture_default_str();
    rl->add_option("--eval-questions", rl_opts->eval_questions, "Held-out questions")
        ->capture_default_str();
    add_seed_option(rl, rl_opts->seed);
    add_threads_option(rl, rl_opts->threads);
    rl->add_option("--out", rl_opts->out, "Metrics CSV path")->required();
    add_config_option(rl);
    rl->callback([rl, rl_opts] { run_rl(*rl, *rl_opts); });

    // metrics -------------------------------------------------------------------
    auto metrics_opts = std::make_shared<MetricsOpts>();
    CLI::App* metrics = app.add_subcommand("metrics", "Repeat/reflection scores of a text file");
    metrics->add_option("--text", metrics_opts->text, "Input text file")->required();
    metrics->add_option("--out", metrics_opts->out, "Optional CSV output path");
    add_threads_option(metrics, metrics_opts->threads);
    add_config_option(metrics);
    metrics->callback([metrics, metrics_opts] { run_metrics(*metrics, *metrics_opts); });

    // report ----------------------------------------------------------------------
    auto report_opts = std::make_shared<ReportOpts>();
    CLI::App* report = app.add_subcommand("report", "Bundle CSV artifacts into plot-ready JSON");
    report->add_option("--rl", report_opts->rl_list, "Comma-separated RL metrics CSVs");
    report->add_option("--search", report_opts->search_list,
                       "Comma-separated search accuracy CSVs");
    report->add_option("--loss", report_opts->loss_list, "Comma-separated loss CSVs");
    report->add_option("--scores", report_opts->scores_list,
                       "Comma-separated trajectory score CSVs");
    report->add_option("--run-id", report_opts->run_id, "Report identifier")
        ->capture_default_str();
    add_threads_option(report, report_opts->threads);
    report->add_option("--out", report_opts->out, "Report JSON path")->required();
    add_config_option(report);
    report->callback([report, report_opts] { run_report(*report, *report_opts); });

    // ablate ------------------------------------------------------------------------
    auto ablate_opts = std::make_shared<AblateOpts>();
    CLI::App* ablate =
        app.add_subcommand("ablate", "L_z-fraction sweep plus log-vs-linear RL comparison");
    add_world_options(ablate, ablate_opts->world);
    ablate->add_option("--lz", ablate_opts->lz_list, "Comma-separated L_z fractions")
        ->capture_default_str();
    ablate->add_option("--n", ablate_opts->n, "Dataset size per world")->capture_default_str();
    ablate->add_option("--heldout", ablate_opts->heldout, "Held-out fraction")
        ->capture_default_str();
    ablate->add_option("--epochs", ablate_opts->epochs, "Reward-model epochs")
        ->capture_default_str();
    ablate->add_option("--batch", ablate_opts->batch, "Reward-model batch size")
        ->capture_default_str();
    ablate->add_option("--lr", ablate_opts->lr, "Reward-model learning rate")
        ->capture_default_str();
    ablate->add_option("--hidden", ablate_opts->hidden, "Reward-model hidden width")
        ->capture_default_str();
    ablate->add_option("--rl-iterations", ablate_opts->rl_iterations, "RL iterations")
        ->capture_default_str();
    ablate->add_option("--rl-prompts", ablate_opts->rl_prompts, "RL prompts per iteration")
        ->capture_default_str();
    ablate->add_option("--rl-group", ablate_opts->rl_group, "RL responses per prompt")
        ->capture_default_str();
    ablate->add_option("--rl-max-tokens", ablate_opts->rl_max_tokens, "RL token budget")
        ->capture_default_str();
    ablate->add_option("--rl-eval", ablate_opts->rl_eval, "RL held-out questions")
        ->capture_default_str();
    add_seed_option(ablate, ablate_opts->seed);
    add_threads_option(ablate, ablate_opts->threads);
    ablate->add_option("--out-dir", ablate_opts->out_dir, "Output directory")->required();
    add_config_option(ablate);
    ablate->callback([ablate, ablate_opts] { run_ablate(*ablate, *ablate_opts); });

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11 consumes back to front
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
