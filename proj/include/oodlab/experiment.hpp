#ifndef OODLAB_EXPERIMENT_HPP
#define OODLAB_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oodlab/dataset.hpp"
#include "oodlab/eval_stats.hpp"
#include "oodlab/scoring.hpp"
#include "oodlab/trainer.hpp"

namespace oodlab {

/// Synthetic benchmark: C Gaussian classes on a circle, near-OOD at class
/// midpoints, far-OOD on a distant shell.
struct SyntheticDataSpec {
    std::size_t classes = 4;
    std::size_t dim = 2;
    double sigma = 0.3;
    double mean_radius = 1.0;
    std::size_t train_per_class = 250;
    std::size_t val_per_class = 0;
    std::size_t test_per_class = 100;
    std::size_t near = 400;
    std::size_t far = 400;

    void validate() const;
    bool operator==(const SyntheticDataSpec&) const = default;
};

/// Externally supplied CSV files, one per role. id_val may be empty.
struct CsvDataSpec {
    std::string id_train;
    std::string id_val;
    std::string id_test;
    std::string near;
    std::string far;

    void validate() const;
    bool operator==(const CsvDataSpec&) const = default;
};

struct DatasetBundle {
    Dataset id_train;
    Dataset id_test;
    Dataset near;
    Dataset far;
    std::optional<Dataset> id_val;
};

struct ExperimentConfig {
    std::string name;  // optional label; presets fill it in
    ObjectiveConfig objective;
    std::vector<std::size_t> hidden = {64, 64};
    std::optional<HeadKind> head_override;  // must match the objective family
    OptimizerConfig opt{.lr0 = 0.1, .epochs = 60, .batch_size = 64};
    ScorerRule scorer = ScorerRule::automatic;
    std::uint64_t base_seed = 7;
    int runs = 5;
    std::variant<SyntheticDataSpec, CsvDataSpec> data = SyntheticDataSpec{};

    /// Cross-field validation (head vs objective vs scorer, dataset spec,
    /// optimizer ranges). Throws ConfigError with an actionable message.
    void validate() const;

    bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

struct Preset {
    std::string name;  // e.g. "cifar10-analog/prototype"
    ExperimentConfig config;
};

/// Hyperparameter presets, grouped as <group>/<objective>. Values carry the
/// published learning rate, embedding dimension, lambda/tau, mining strategy
/// and scoring rule per group; the datasets are the synthetic benchmark.
const std::vector<Preset>& all_presets();
ExperimentConfig preset_config(const std::string& name);
/// The four objective configs of one group, in ap/ce/prototype/triplet order.
std::vector<ExperimentConfig> preset_group(const std::string& group);

/// Deterministic sub-stream ids for one run's seed.
enum RunStream : std::uint64_t {
    kStreamIdTrain = 0,
    kStreamIdTest = 1,
    kStreamNear = 2,
    kStreamFar = 3,
    kStreamInit = 4,
    kStreamTrain = 5,
    kStreamIdVal = 6,
};

/// Generates (or loads) the run's datasets from run_seed's sub-streams.
DatasetBundle build_datasets(const ExperimentConfig& config, std::uint64_t run_seed);

/// Trains and scores one run; run_seed = base_seed + run_index.
struct RunResult {
    TrainedModel model;
    ScoreSet id_test_scores;
    ScoreSet near_scores;
    ScoreSet far_scores;
    RunMetrics metrics;
};
RunResult execute_run(const ExperimentConfig& config, std::uint64_t run_seed);

/// Runs `config.runs` seeded runs (seed = base_seed + r). When out_dir is
/// given, persists config.json, runs/run_<r>/{checkpoint.json, scores_*.csv,
/// metrics.json} and metrics.csv. A failed run is reported on stderr and
/// skipped; the remaining runs proceed.
std::vector<RunMetrics> run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path* out_dir = nullptr);

/// Runs one experiment per config (duplicate objectives rejected), aggregates
/// all runs and writes metrics.csv, report.md and report.json under out_dir.
ComparisonReport compare(const std::vector<ExperimentConfig>& configs,
                         const std::filesystem::path& out_dir);

/// Recomputes the comparison report from a persisted metrics.csv.
ComparisonReport report_from_metrics_csv(const std::filesystem::path& metrics_csv);

void save_metrics_csv(const std::vector<RunMetrics>& runs, const std::filesystem::path& path);
std::vector<RunMetrics> load_metrics_csv(const std::filesystem::path& path);
nlohmann::json run_metrics_to_json(const RunMetrics& metrics);
RunMetrics run_metrics_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const ComparisonReport& report);

/// One CSV row per example across the given datasets: head outputs
/// (e0..e{k-1}), role in {id, near, far}, label.
void export_embeddings(const TrainedModel& model, const std::vector<Dataset>& datasets,
                       const std::filesystem::path& path);

}  // namespace oodlab

#endif
