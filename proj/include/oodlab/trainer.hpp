#ifndef OODLAB_TRAINER_HPP
#define OODLAB_TRAINER_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oodlab/dataset.hpp"
#include "oodlab/network.hpp"
#include "oodlab/objectives.hpp"

namespace oodlab {

struct TrainDiagnostics {
    std::vector<double> epoch_losses;  // mean per-batch objective loss
    std::vector<double> epoch_lrs;
    int skipped_batches = 0;  // batches lacking the structure the objective needs

    bool operator==(const TrainDiagnostics&) const = default;
};

/// Full train-set embeddings with labels, the 1-NN scorer's search space.
struct TrainEmbeddingIndex {
    Matrix embeddings;
    std::vector<int> labels;

    bool operator==(const TrainEmbeddingIndex&) const = default;
};

struct TrainedModel {
    Network net;
    ObjectiveConfig objective;
    std::optional<PrototypeBank> prototypes;       // prototype objective
    std::optional<TrainEmbeddingIndex> train_index;  // embedding heads
    TrainDiagnostics diagnostics;

    bool operator==(const TrainedModel&) const = default;
};

/// Class means of one forward pass over the train set; the starting point for
/// the learnable prototype bank.
PrototypeBank init_prototypes(const Network& net, const Dataset& train_set);

/// Runs epochs of shuffled mini-batch momentum SGD with the per-epoch cosine
/// schedule. The caller's rng seeds two sub-streams (shuffle, mining) via two
/// draws, so a run is replayable from the seed alone. Batches the objective
/// cannot use are skipped with a stderr warning and counted.
TrainedModel train(Network net, const Dataset& train_set, const ObjectiveConfig& objective,
                   const OptimizerConfig& opt, Rng& rng);

/// Convenience: derives the head layout from the objective, initializes the
/// network from `init_rng`, and trains.
TrainedModel train_from_config(const Dataset& train_set, const std::vector<std::size_t>& hidden,
                               const ObjectiveConfig& objective, const OptimizerConfig& opt,
                               Rng& init_rng, Rng& train_rng);

/// JSON checkpoint: config, row-major parameters, objective, prototype bank,
/// train-embedding index, diagnostics. Round-trips bit-exactly.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const TrainedModel& model);
TrainedModel checkpoint_from_string(const std::string& text);

}  // namespace oodlab

#endif
