#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oodlab/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigSource {
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int runs = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON file");
        cmd->add_option("--preset", preset, "preset name, e.g. cifar10-analog/ce");
        cmd->add_option("--seed", seed, "override the base seed")->each([this](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--runs", runs, "override the number of runs");
    }

    oodlab::ExperimentConfig resolve() const {
        oodlab::ExperimentConfig config;
        if (!config_path.empty() && !preset.empty()) {
            throw oodlab::ConfigError("pass either --config or --preset, not both");
        }
        if (!config_path.empty()) {
            config = oodlab::load_config(config_path);
        } else if (!preset.empty()) {
            config = oodlab::preset_config(preset);
        } else {
            throw oodlab::ConfigError("one of --config or --preset is required");
        }
        if (seed_set) config.base_seed = seed;
        if (runs > 0) config.runs = runs;
        return config;
    }
};

void emit_error(const std::string& kind, const std::string& message) {
    json j{{"error", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

void print_presets() {
    std::printf("%-30s %-10s %-8s %-6s %-7s %-6s %-10s %s\n", "preset", "objective", "lr", "ED",
                "lambda", "tau", "mining", "scorer");
    for (const oodlab::Preset& p : oodlab::all_presets()) {
        const auto& c = p.config;
        const bool embedding = c.objective.uses_embedding_head();
        std::printf("%-30s %-10s %-8g %-6s %-7s %-6s %-10s %s\n", p.name.c_str(),
                    oodlab::objective_name(c.objective.kind), c.opt.lr0,
                    embedding ? std::to_string(c.objective.embedding_dim).c_str() : "-",
                    c.objective.kind == oodlab::ObjectiveKind::prototype
                        ? std::to_string(c.objective.lambda).c_str()
                        : "-",
                    c.objective.kind == oodlab::ObjectiveKind::prototype
                        ? std::to_string(c.objective.tau).c_str()
                        : "-",
                    c.objective.kind == oodlab::ObjectiveKind::triplet
                        ? oodlab::mining_name(c.objective.mining)
                        : "-",
                    oodlab::scorer_name(c.scorer));
    }
}

int cmd_gen_data(const ConfigSource& source, const std::string& out_dir) {
    oodlab::ExperimentConfig config = source.resolve();
    config.validate();
    oodlab::DatasetBundle bundle = oodlab::build_datasets(config, config.base_seed);
    fs::create_directories(out_dir);
    oodlab::save_csv(bundle.id_train, fs::path(out_dir) / "id_train.csv");
    oodlab::save_csv(bundle.id_test, fs::path(out_dir) / "id_test.csv");
    if (bundle.id_val) {
        oodlab::save_csv(*bundle.id_val, fs::path(out_dir) / "id_val.csv");
    }
    oodlab::save_csv(bundle.near, fs::path(out_dir) / "near_ood.csv");
    oodlab::save_csv(bundle.far, fs::path(out_dir) / "far_ood.csv");
    std::printf("wrote datasets under %s\n", out_dir.c_str());
    return 0;
}

int cmd_train(const ConfigSource& source, const std::string& out_dir) {
    oodlab::ExperimentConfig config = source.resolve();
    fs::path out(out_dir);
    std::vector<oodlab::RunMetrics> metrics = oodlab::run_experiment(config, &out);
    if (metrics.empty()) {
        emit_error("run_failure", "all runs failed");
        return 1;
    }
    for (const oodlab::RunMetrics& m : metrics) {
        std::printf("seed %llu: id_accuracy=%.4f near_auroc=%.4f far_auroc=%.4f\n",
                    static_cast<unsigned long long>(m.seed), m.id_accuracy, m.near_auroc,
                    m.far_auroc);
    }
    if (metrics.size() != static_cast<std::size_t>(config.runs)) {
        emit_error("run_failure", std::to_string(config.runs - static_cast<int>(metrics.size())) +
                                      " of " + std::to_string(config.runs) + " runs failed");
        return 1;
    }
    return 0;
}

int cmd_score(const std::string& model_path, const std::string& data_path,
              const std::string& role, const std::string& scorer, const std::string& out_path) {
    oodlab::TrainedModel model = oodlab::load_checkpoint(model_path);
    oodlab::Dataset dataset = oodlab::load_csv(data_path, oodlab::role_from_name(role));
    oodlab::ScoreSet scores =
        oodlab::score_dataset(model, dataset, oodlab::scorer_from_name(scorer));
    oodlab::save_scores_csv(scores, out_path);
    std::printf("scored %zu examples with '%s' -> %s\n", scores.entries.size(),
                oodlab::scorer_name(scores.rule), out_path.c_str());
    return 0;
}

int cmd_eval(const std::string& id_path, const std::string& near_path,
             const std::string& far_path, const std::string& out_path) {
    oodlab::ScoreSet id_scores = oodlab::load_scores_csv(id_path);
    oodlab::ScoreSet near_scores = oodlab::load_scores_csv(near_path);
    oodlab::ScoreSet far_scores = oodlab::load_scores_csv(far_path);

    json j;
    j["id_accuracy"] = oodlab::id_accuracy(id_scores.predictions(), id_scores.true_labels());
    j["near_auroc"] = oodlab::auroc(id_scores.scores(), near_scores.scores());
    j["far_auroc"] = oodlab::auroc(id_scores.scores(), far_scores.scores());
    std::ofstream out(out_path);
    out << j.dump(2) << "\n";
    std::printf("%s\n", j.dump().c_str());
    return 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& preset_group,
                const std::string& out_dir, std::uint64_t seed, bool seed_set, int runs) {
    std::vector<oodlab::ExperimentConfig> configs;
    if (!preset_group.empty()) {
        configs = oodlab::preset_group(preset_group);
    }
    for (const std::string& path : config_paths) {
        configs.push_back(oodlab::load_config(path));
    }
    for (oodlab::ExperimentConfig& config : configs) {
        if (seed_set) config.base_seed = seed;
        if (runs > 0) config.runs = runs;
    }
    oodlab::ComparisonReport report = oodlab::compare(configs, out_dir);
    std::printf("%s", oodlab::render_markdown(report).c_str());
    return 0;
}

int cmd_export(const std::string& model_path, const std::string& id_path,
               const std::string& near_path, const std::string& far_path,
               const std::string& out_path) {
    oodlab::TrainedModel model = oodlab::load_checkpoint(model_path);
    std::vector<oodlab::Dataset> datasets;
    datasets.push_back(oodlab::load_csv(id_path, oodlab::DatasetRole::id_test));
    datasets.push_back(oodlab::load_csv(near_path, oodlab::DatasetRole::near_ood));
    datasets.push_back(oodlab::load_csv(far_path, oodlab::DatasetRole::far_ood));
    oodlab::export_embeddings(model, datasets, out_path);
    std::printf("exported head outputs -> %s\n", out_path.c_str());
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_path) {
    fs::path metrics = fs::path(in_dir) / "metrics.csv";
    oodlab::ComparisonReport report = oodlab::report_from_metrics_csv(metrics);
    std::ofstream out(out_path);
    if (!out) {
        throw std::runtime_error("cannot write " + out_path);
    }
    out << oodlab::render_markdown(report);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"oodlab: training-objective comparison lab for OOD detection"};
    app.require_subcommand(0, 1);

    bool list_presets = false;
    app.add_flag("--list-presets", list_presets, "list built-in presets and exit");

    ConfigSource gen_source, train_source;
    std::string out_dir = "out";

    CLI::App* gen = app.add_subcommand("gen-data", "generate benchmark CSV datasets");
    gen_source.attach(gen);
    std::string gen_out = "data";
    gen->add_option("--out", gen_out, "output directory");

    CLI::App* train = app.add_subcommand("train", "run a multi-seed training experiment");
    train_source.attach(train);
    train->add_option("--out", out_dir, "output directory");

    CLI::App* score = app.add_subcommand("score", "score a dataset with a trained checkpoint");
    std::string model_path, data_path, score_out = "scores.csv", role = "id_test",
                scorer = "auto";
    score->add_option("--model", model_path, "checkpoint JSON")->required();
    score->add_option("--data", data_path, "dataset CSV")->required();
    score->add_option("--role", role, "dataset role tag (default id_test)");
    score->add_option("--scorer", scorer, "auto|msp|entropy|knn");
    score->add_option("--out", score_out, "output CSV");

    CLI::App* eval = app.add_subcommand("eval", "compute metrics from score CSVs");
    std::string eval_id, eval_near, eval_far, eval_out = "metrics.json";
    eval->add_option("--id", eval_id, "ID test score CSV")->required();
    eval->add_option("--near", eval_near, "near-OOD score CSV")->required();
    eval->add_option("--far", eval_far, "far-OOD score CSV")->required();
    eval->add_option("--out", eval_out, "output JSON");

    CLI::App* cmp = app.add_subcommand("compare", "run several objectives and compare them");
    std::vector<std::string> cmp_configs;
    std::string cmp_presets, cmp_out = "compare_out";
    std::uint64_t cmp_seed = 0;
    bool cmp_seed_set = false;
    int cmp_runs = 0;
    cmp->add_option("--config", cmp_configs, "experiment config JSON (repeatable)");
    cmp->add_option("--presets", cmp_presets, "preset group, e.g. cifar10-analog");
    cmp->add_option("--seed", cmp_seed, "override the base seed for all objectives")
        ->each([&](const std::string&) { cmp_seed_set = true; });
    cmp->add_option("--runs", cmp_runs, "override the number of runs");
    cmp->add_option("--out", cmp_out, "output directory");

    CLI::App* exp = app.add_subcommand("export-embeddings", "dump head outputs for plotting");
    std::string exp_model, exp_id, exp_near, exp_far, exp_out = "embeddings.csv";
    exp->add_option("--model", exp_model, "checkpoint JSON")->required();
    exp->add_option("--id", exp_id, "ID dataset CSV")->required();
    exp->add_option("--near", exp_near, "near-OOD dataset CSV")->required();
    exp->add_option("--far", exp_far, "far-OOD dataset CSV")->required();
    exp->add_option("--out", exp_out, "output CSV");

    CLI::App* rep = app.add_subcommand("report", "rebuild a report from persisted metrics");
    std::string rep_in, rep_out = "report.md";
    rep->add_option("--in", rep_in, "compare output directory")->required();
    rep->add_option("--out", rep_out, "output markdown file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list_presets) {
            print_presets();
            return 0;
        }
        if (gen->parsed()) return cmd_gen_data(gen_source, gen_out);
        if (train->parsed()) return cmd_train(train_source, out_dir);
        if (score->parsed()) return cmd_score(model_path, data_path, role, scorer, score_out);
        if (eval->parsed()) return cmd_eval(eval_id, eval_near, eval_far, eval_out);
        if (cmp->parsed()) {
            return cmd_compare(cmp_configs, cmp_presets, cmp_out, cmp_seed, cmp_seed_set,
                               cmp_runs);
        }
        if (exp->parsed()) return cmd_export(exp_model, exp_id, exp_near, exp_far, exp_out);
        if (rep->parsed()) return cmd_report(rep_in, rep_out);
        std::cout << app.help();
        return 0;
    } catch (const oodlab::ConfigError& ex) {
        emit_error("config", ex.what());
    } catch (const oodlab::ParseError& ex) {
        emit_error("parse", ex.what());
    } catch (const std::exception& ex) {
        emit_error("internal", ex.what());
    }
    return 1;
}
