#include "oodlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oodlab {

using nlohmann::json;

void SyntheticDataSpec::validate() const {
    if (classes < 2) throw ConfigError("dataset: classes must be >= 2");
    if (dim < 2) throw ConfigError("dataset: dim must be >= 2 (means sit on a circle)");
    if (!(sigma > 0.0)) throw ConfigError("dataset: sigma must be positive");
    if (!(mean_radius > 0.0)) throw ConfigError("dataset: mean_radius must be positive");
    if (train_per_class < 1) throw ConfigError("dataset: train_per_class must be >= 1");
    if (test_per_class < 1) throw ConfigError("dataset: test_per_class must be >= 1");
    if (near < 1) throw ConfigError("dataset: near must be >= 1");
    if (far < 1) throw ConfigError("dataset: far must be >= 1");
}

void CsvDataSpec::validate() const {
    if (id_train.empty() || id_test.empty() || near.empty() || far.empty()) {
        throw ConfigError("dataset: csv sources need id_train, id_test, near and far paths");
    }
}

void ExperimentConfig::validate() const {
    try {
        objective.validate();
        opt.validate();
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (hidden.empty()) throw ConfigError("hidden layer list must not be empty");

    const HeadKind derived =
        objective.uses_embedding_head() ? HeadKind::embedding : HeadKind::logits;
    if (head_override && *head_override != derived) {
        throw ConfigError(std::string("objective '") + objective_name(objective.kind) +
                          "' requires a " + head_kind_name(derived) + " head, but the config " +
                          "asks for " + head_kind_name(*head_override) +
                          ". Drop the head key or switch the objective.");
    }
    check_scorer_compatible(resolve_scorer(scorer, objective.kind), objective.kind);
    std::visit([](const auto& spec) { spec.validate(); }, data);
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

json config_to_json(const ExperimentConfig& config) {
    json j;
    j["name"] = config.name;
    j["objective"] = objective_name(config.objective.kind);
    j["lr"] = config.opt.lr0;
    j["momentum"] = config.opt.momentum;
    j["weight_decay"] = config.opt.weight_decay;
    j["epochs"] = config.opt.epochs;
    j["batch_size"] = config.opt.batch_size;
    j["hidden"] = config.hidden;
    if (config.head_override) j["head"] = head_kind_name(*config.head_override);
    j["embedding_dim"] = config.objective.embedding_dim;
    j["margin"] = config.objective.margin;
    j["mining"] = mining_name(config.objective.mining);
    j["lambda"] = config.objective.lambda;
    j["tau"] = config.objective.tau;
    j["delta"] = config.objective.delta;
    j["scorer"] = scorer_name(config.scorer);
    j["seed"] = config.base_seed;
    j["runs"] = config.runs;
    if (const auto* synth = std::get_if<SyntheticDataSpec>(&config.data)) {
        j["dataset"] = {{"kind", "synthetic"},
                        {"classes", synth->classes},
                        {"dim", synth->dim},
                        {"sigma", synth->sigma},
                        {"mean_radius", synth->mean_radius},
                        {"train_per_class", synth->train_per_class},
                        {"val_per_class", synth->val_per_class},
                        {"test_per_class", synth->test_per_class},
                        {"near", synth->near},
                        {"far", synth->far}};
    } else {
        const auto& csv = std::get<CsvDataSpec>(config.data);
        j["dataset"] = {{"kind", "csv"},       {"id_train", csv.id_train},
                        {"id_val", csv.id_val}, {"id_test", csv.id_test},
                        {"near", csv.near},     {"far", csv.far}};
    }
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig config;
    config.name = j.value("name", "");
    config.objective.kind = objective_from_name(j.at("objective").get<std::string>());
    config.opt.lr0 = j.value("lr", config.opt.lr0);
    config.opt.momentum = j.value("momentum", config.opt.momentum);
    config.opt.weight_decay = j.value("weight_decay", config.opt.weight_decay);
    config.opt.epochs = j.value("epochs", config.opt.epochs);
    config.opt.batch_size = j.value("batch_size", config.opt.batch_size);
    config.hidden = j.value("hidden", config.hidden);
    if (j.contains("head")) {
        config.head_override = head_kind_from_name(j.at("head").get<std::string>());
    }
    config.objective.embedding_dim = j.value("embedding_dim", config.objective.embedding_dim);
    config.objective.margin = j.value("margin", config.objective.margin);
    if (j.contains("mining")) {
        config.objective.mining = mining_from_name(j.at("mining").get<std::string>());
    }
    config.objective.lambda = j.value("lambda", config.objective.lambda);
    config.objective.tau = j.value("tau", config.objective.tau);
    config.objective.delta = j.value("delta", config.objective.delta);
    if (j.contains("scorer")) {
        config.scorer = scorer_from_name(j.at("scorer").get<std::string>());
    }
    config.base_seed = j.value("seed", config.base_seed);
    config.runs = j.value("runs", config.runs);
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        const std::string kind = d.value("kind", "synthetic");
        if (kind == "synthetic") {
            SyntheticDataSpec spec;
            spec.classes = d.value("classes", spec.classes);
            spec.dim = d.value("dim", spec.dim);
            spec.sigma = d.value("sigma", spec.sigma);
            spec.mean_radius = d.value("mean_radius", spec.mean_radius);
            spec.train_per_class = d.value("train_per_class", spec.train_per_class);
            spec.val_per_class = d.value("val_per_class", spec.val_per_class);
            spec.test_per_class = d.value("test_per_class", spec.test_per_class);
            spec.near = d.value("near", spec.near);
            spec.far = d.value("far", spec.far);
            config.data = spec;
        } else if (kind == "csv") {
            CsvDataSpec spec;
            spec.id_train = d.value("id_train", "");
            spec.id_val = d.value("id_val", "");
            spec.id_test = d.value("id_test", "");
            spec.near = d.value("near", "");
            spec.far = d.value("far", "");
            config.data = spec;
        } else {
            throw ConfigError("dataset.kind must be 'synthetic' or 'csv', got '" + kind + "'");
        }
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    json j;
    in >> j;
    return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << config_to_json(config).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

ExperimentConfig make_preset(const std::string& name, ObjectiveKind kind, double lr,
                             std::size_t embedding_dim, double lambda, double tau,
                             MiningStrategy mining, ScorerRule scorer) {
    ExperimentConfig config;
    config.name = name;
    config.objective.kind = kind;
    config.objective.embedding_dim = embedding_dim;
    config.objective.lambda = lambda;
    config.objective.tau = tau;
    config.objective.mining = mining;
    config.opt.lr0 = lr;
    config.scorer = scorer;
    return config;
}

std::vector<Preset> build_presets() {
    std::vector<Preset> presets;
    auto add = [&](ExperimentConfig config) {
        presets.push_back(Preset{config.name, std::move(config)});
    };

    // cifar10-analog
    add(make_preset("cifar10-analog/ap", ObjectiveKind::average_precision, 0.08, 64, 0.01, 0.1,
                    MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("cifar10-analog/ce", ObjectiveKind::cross_entropy, 0.10, 64, 0.01, 0.1,
                    MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("cifar10-analog/prototype", ObjectiveKind::prototype, 0.10, 64, 0.01, 0.1,
                    MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("cifar10-analog/triplet", ObjectiveKind::triplet, 0.005, 32, 0.01, 0.1,
                    MiningStrategy::random, ScorerRule::knn));

    // cifar100-analog
    add(make_preset("cifar100-analog/ap", ObjectiveKind::average_precision, 0.08, 64, 0.001, 0.1,
                    MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("cifar100-analog/ce", ObjectiveKind::cross_entropy, 0.08, 64, 0.001, 0.1,
                    MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("cifar100-analog/prototype", ObjectiveKind::prototype, 0.10, 128, 0.001, 0.1,
                    MiningStrategy::random, ScorerRule::msp));
    add(make_preset("cifar100-analog/triplet", ObjectiveKind::triplet, 0.0004, 256, 0.001, 0.1,
                    MiningStrategy::semi_hard, ScorerRule::knn));

    // imagenet200-analog
    add(make_preset("imagenet200-analog/ap", ObjectiveKind::average_precision, 0.10, 64, 0.001,
                    0.1, MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("imagenet200-analog/ce", ObjectiveKind::cross_entropy, 0.08, 64, 0.001, 0.1,
                    MiningStrategy::random, ScorerRule::entropy));
    add(make_preset("imagenet200-analog/prototype", ObjectiveKind::prototype, 0.10, 128, 0.001,
                    0.1, MiningStrategy::random, ScorerRule::msp));
    add(make_preset("imagenet200-analog/triplet", ObjectiveKind::triplet, 0.0009, 512, 0.001, 0.1,
                    MiningStrategy::semi_hard, ScorerRule::knn));
    return presets;
}

}  // namespace

const std::vector<Preset>& all_presets() {
    static const std::vector<Preset> presets = build_presets();
    return presets;
}

ExperimentConfig preset_config(const std::string& name) {
    for (const Preset& p : all_presets()) {
        if (p.name == name) return p.config;
    }
    throw ConfigError("unknown preset '" + name + "'; run the CLI with --list-presets");
}

std::vector<ExperimentConfig> preset_group(const std::string& group) {
    std::vector<ExperimentConfig> out;
    for (const Preset& p : all_presets()) {
        if (p.name.starts_with(group + "/")) out.push_back(p.config);
    }
    if (out.empty()) {
        throw ConfigError("unknown preset group '" + group + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

DatasetBundle build_datasets(const ExperimentConfig& config, std::uint64_t run_seed) {
    DatasetBundle bundle;
    if (const auto* synth = std::get_if<SyntheticDataSpec>(&config.data)) {
        MixtureSpec spec;
        spec.means = circle_means(synth->classes, synth->dim, synth->mean_radius);
        spec.sigma = synth->sigma;

        spec.per_class = synth->train_per_class;
        Rng train_rng = Rng::stream(run_seed, kStreamIdTrain);
        bundle.id_train = gen_id(spec, train_rng);

        spec.per_class = synth->test_per_class;
        Rng test_rng = Rng::stream(run_seed, kStreamIdTest);
        bundle.id_test = gen_id(spec, test_rng);
        bundle.id_test.role = DatasetRole::id_test;

        if (synth->val_per_class > 0) {
            spec.per_class = synth->val_per_class;
            Rng val_rng = Rng::stream(run_seed, kStreamIdVal);
            Dataset val = gen_id(spec, val_rng);
            val.role = DatasetRole::id_val;
            bundle.id_val = std::move(val);
        }

        spec.per_class = synth->train_per_class;
        Rng near_rng = Rng::stream(run_seed, kStreamNear);
        bundle.near = gen_near_ood(spec, synth->near, near_rng);
        Rng far_rng = Rng::stream(run_seed, kStreamFar);
        bundle.far = gen_far_ood(spec, synth->far, far_rng);
    } else {
        const auto& csv = std::get<CsvDataSpec>(config.data);
        bundle.id_train = load_csv(csv.id_train, DatasetRole::id_train);
        bundle.id_test = load_csv(csv.id_test, DatasetRole::id_test);
        if (!csv.id_val.empty()) {
            bundle.id_val = load_csv(csv.id_val, DatasetRole::id_val);
        }
        bundle.near = load_csv(csv.near, DatasetRole::near_ood);
        bundle.far = load_csv(csv.far, DatasetRole::far_ood);
        if (bundle.id_test.num_classes > bundle.id_train.num_classes) {
            throw ConfigError("id_test labels exceed the classes seen in id_train");
        }
        bundle.id_test.num_classes = bundle.id_train.num_classes;
    }
    return bundle;
}

RunResult execute_run(const ExperimentConfig& config, std::uint64_t run_seed) {
    DatasetBundle data = build_datasets(config, run_seed);

    Rng init_rng = Rng::stream(run_seed, kStreamInit);
    Rng train_rng = Rng::stream(run_seed, kStreamTrain);
    RunResult result;
    result.model = train_from_config(data.id_train, config.hidden, config.objective, config.opt,
                                     init_rng, train_rng);

    result.id_test_scores = score_dataset(result.model, data.id_test, config.scorer);
    result.near_scores = score_dataset(result.model, data.near, config.scorer);
    result.far_scores = score_dataset(result.model, data.far, config.scorer);

    result.metrics.objective = objective_name(config.objective.kind);
    result.metrics.scorer = scorer_name(result.id_test_scores.rule);
    result.metrics.seed = run_seed;
    result.metrics.id_accuracy =
        id_accuracy(result.id_test_scores.predictions(), result.id_test_scores.true_labels());
    result.metrics.near_auroc =
        auroc(result.id_test_scores.scores(), result.near_scores.scores());
    result.metrics.far_auroc = auroc(result.id_test_scores.scores(), result.far_scores.scores());
    return result;
}

std::vector<RunMetrics> run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path* out_dir) {
    config.validate();
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        save_config(config, *out_dir / "config.json");
    }
    std::vector<RunMetrics> metrics;
    for (int r = 0; r < config.runs; ++r) {
        const std::uint64_t run_seed = config.base_seed + static_cast<std::uint64_t>(r);
        try {
            RunResult result = execute_run(config, run_seed);
            if (out_dir) {
                std::filesystem::path run_dir = *out_dir / "runs" / ("run_" + std::to_string(r));
                std::filesystem::create_directories(run_dir);
                save_checkpoint(result.model, run_dir / "checkpoint.json");
                save_scores_csv(result.id_test_scores, run_dir / "scores_id_test.csv");
                save_scores_csv(result.near_scores, run_dir / "scores_near_ood.csv");
                save_scores_csv(result.far_scores, run_dir / "scores_far_ood.csv");
                std::ofstream out(run_dir / "metrics.json");
                out << run_metrics_to_json(result.metrics).dump(2) << "\n";
            }
            metrics.push_back(result.metrics);
        } catch (const std::exception& ex) {
            std::fprintf(stderr, "error: run %d (seed %llu) failed: %s\n", r,
                         static_cast<unsigned long long>(run_seed), ex.what());
        }
    }
    if (out_dir) {
        save_metrics_csv(metrics, *out_dir / "metrics.csv");
    }
    return metrics;
}

ComparisonReport compare(const std::vector<ExperimentConfig>& configs,
                         const std::filesystem::path& out_dir) {
    if (configs.size() < 2) {
        throw ConfigError("compare needs at least 2 objectives");
    }
    for (std::size_t i = 0; i < configs.size(); ++i) {
        configs[i].validate();
        for (std::size_t j = i + 1; j < configs.size(); ++j) {
            if (configs[i].objective.kind == configs[j].objective.kind) {
                throw ConfigError(std::string("duplicate objective '") +
                                  objective_name(configs[i].objective.kind) +
                                  "' in compare configs");
            }
        }
    }
    std::filesystem::create_directories(out_dir);
    std::vector<RunMetrics> all_runs;
    std::vector<std::string> failure_notes;
    for (const ExperimentConfig& config : configs) {
        std::filesystem::path sub = out_dir / objective_name(config.objective.kind);
        std::vector<RunMetrics> runs = run_experiment(config, &sub);
        if (runs.size() < static_cast<std::size_t>(config.runs)) {
            failure_notes.push_back(
                std::string("objective '") + objective_name(config.objective.kind) + "': " +
                std::to_string(config.runs - static_cast<int>(runs.size())) + " of " +
                std::to_string(config.runs) + " runs failed (see stderr)");
        }
        all_runs.insert(all_runs.end(), runs.begin(), runs.end());
    }
    save_metrics_csv(all_runs, out_dir / "metrics.csv");

    ComparisonReport report = aggregate(all_runs);
    report.notes.insert(report.notes.end(), failure_notes.begin(), failure_notes.end());
    {
        std::ofstream out(out_dir / "report.md");
        out << render_markdown(report);
    }
    {
        std::ofstream out(out_dir / "report.json");
        out << report_to_json(report).dump(2) << "\n";
    }
    return report;
}

ComparisonReport report_from_metrics_csv(const std::filesystem::path& metrics_csv) {
    return aggregate(load_metrics_csv(metrics_csv));
}

// ---------------------------------------------------------------------------
// Metrics persistence
// ---------------------------------------------------------------------------

void save_metrics_csv(const std::vector<RunMetrics>& runs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "objective,scorer,seed,id_accuracy,near_auroc,far_auroc\n";
    char buf[128];
    for (const RunMetrics& r : runs) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", r.id_accuracy, r.near_auroc,
                      r.far_auroc);
        out << r.objective << "," << r.scorer << "," << r.seed << "," << buf << "\n";
    }
}

std::vector<RunMetrics> load_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) ||
        line != "objective,scorer,seed,id_accuracy,near_auroc,far_auroc") {
        throw ParseError(path.string() + ": unexpected metrics header");
    }
    std::vector<RunMetrics> runs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        char objective[64], scorer[64];
        unsigned long long seed = 0;
        RunMetrics r;
        if (std::sscanf(line.c_str(), "%63[^,],%63[^,],%llu,%lf,%lf,%lf", objective, scorer,
                        &seed, &r.id_accuracy, &r.near_auroc, &r.far_auroc) != 6) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) +
                             ": malformed row");
        }
        r.objective = objective;
        r.scorer = scorer;
        r.seed = seed;
        runs.push_back(std::move(r));
    }
    return runs;
}

json run_metrics_to_json(const RunMetrics& metrics) {
    return json{{"objective", metrics.objective}, {"scorer", metrics.scorer},
                {"seed", metrics.seed},           {"id_accuracy", metrics.id_accuracy},
                {"near_auroc", metrics.near_auroc}, {"far_auroc", metrics.far_auroc}};
}

RunMetrics run_metrics_from_json(const json& j) {
    RunMetrics r;
    r.objective = j.at("objective").get<std::string>();
    r.scorer = j.at("scorer").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.id_accuracy = j.at("id_accuracy").get<double>();
    r.near_auroc = j.at("near_auroc").get<double>();
    r.far_auroc = j.at("far_auroc").get<double>();
    return r;
}

namespace {

json welch_to_json(const WelchResult& w) {
    json j;
    if (std::isfinite(w.t)) {
        j["t"] = w.t;
    } else {
        j["t"] = w.t > 0 ? "+inf" : "-inf";
    }
    j["nu"] = w.nu;
    j["p"] = w.p;
    j["significant"] = w.significant;
    return j;
}

}  // namespace

json report_to_json(const ComparisonReport& report) {
    json j;
    j["aggregates"] = json::array();
    for (const ObjectiveAggregate& agg : report.aggregates) {
        json metrics;
        for (std::size_t m = 0; m < 3; ++m) {
            metrics[kMetricNames[m]] = {{"mean", agg.metrics[m].mean},
                                        {"stddev", agg.metrics[m].stddev},
                                        {"runs", agg.metrics[m].runs}};
        }
        j["aggregates"].push_back(
            {{"objective", agg.objective}, {"scorer", agg.scorer}, {"metrics", metrics}});
    }
    j["tables"] = json::array();
    for (const MetricTable& table : report.tables) {
        json rows = json::array();
        for (const RankedRow& row : table.rows) {
            json jr = {{"objective", row.objective},
                       {"mean", row.summary.mean},
                       {"stddev", row.summary.stddev}};
            if (row.has_next) jr["vs_next"] = welch_to_json(row.vs_next);
            rows.push_back(std::move(jr));
        }
        j["tables"].push_back({{"metric", table.metric}, {"rows", rows}});
    }
    j["notes"] = report.notes;
    return j;
}

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

namespace {

const char* export_role(DatasetRole role) {
    switch (role) {
        case DatasetRole::near_ood: return "near";
        case DatasetRole::far_ood: return "far";
        default: return "id";
    }
}

}  // namespace

void export_embeddings(const TrainedModel& model, const std::vector<Dataset>& datasets,
                       const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    const std::size_t width = model.net.config.head_dim;
    for (std::size_t j = 0; j < width; ++j) out << "e" << j << ",";
    out << "role,label\n";
    char buf[40];
    for (const Dataset& dataset : datasets) {
        Matrix outputs = model.net.forward(dataset.features());
        for (std::size_t i = 0; i < outputs.rows(); ++i) {
            for (std::size_t j = 0; j < width; ++j) {
                std::snprintf(buf, sizeof(buf), "%.17g", outputs.at(i, j));
                out << buf << ",";
            }
            out << export_role(dataset.role) << "," << dataset.examples[i].label << "\n";
        }
    }
}

}  // namespace oodlab
