#ifndef OODLAB_SCORING_HPP
#define OODLAB_SCORING_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "oodlab/dataset.hpp"
#include "oodlab/trainer.hpp"

namespace oodlab {

/// Raised when an (objective, head, scorer) combination cannot work.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// All OOD scores follow the convention higher = more OOD.
enum class ScorerRule { automatic, msp, entropy, knn };

const char* scorer_name(ScorerRule rule);
ScorerRule scorer_from_name(const std::string& name);

/// Argmax with ties resolved toward the lowest index.
int predict_argmax(const Probabilities& p);

/// Negated maximum softmax probability, in [-1, -1/C].
double msp_score(const Probabilities& p);

/// Shannon entropy (natural log, 0 ln 0 := 0), in [0, ln C].
double entropy_score(const Probabilities& p);

/// Exhaustive 1-NN under squared Euclidean distance: returns the label of the
/// nearest train embedding and that minimum distance as the OOD score.
/// Distance ties resolve toward the lowest train index.
std::pair<int, double> knn_predict_and_score(const Vector& embedding,
                                             const TrainEmbeddingIndex& index);

/// p_c proportional to exp(-tau * D(embedding, prototype_c)).
Probabilities prototype_probs(const Vector& embedding, const PrototypeBank& bank, double tau);

/// Nearest-prototype prediction (argmin distance == argmax probability).
int prototype_predict(const Vector& embedding, const PrototypeBank& bank);

/// Per-class scores treated as logits.
Probabilities ap_probs(const Vector& scores);

/// Maps `automatic` to the objective's published rule: ce -> entropy,
/// ap -> entropy, triplet -> knn, prototype -> entropy.
ScorerRule resolve_scorer(ScorerRule rule, ObjectiveKind objective);

/// Throws ConfigError when the resolved rule cannot be computed for the
/// objective (knn on a logits head, msp/entropy on a triplet model).
void check_scorer_compatible(ScorerRule resolved, ObjectiveKind objective);

struct ScoredExample {
    std::size_t example_id;
    DatasetRole role;
    double score;
    int predicted;
    int true_label;
};

struct ScoreSet {
    std::vector<ScoredExample> entries;
    ScorerRule rule = ScorerRule::entropy;  // resolved, never `automatic`

    Vector scores() const;
    std::vector<int> predictions() const;
    std::vector<int> true_labels() const;
};

/// Scores and classifies every example of the dataset with the model's
/// inference rule and the resolved scoring rule.
ScoreSet score_dataset(const TrainedModel& model, const Dataset& dataset, ScorerRule rule);

/// CSV columns: example_id,role,score,pred,true_label.
void save_scores_csv(const ScoreSet& scores, const std::filesystem::path& path);
ScoreSet load_scores_csv(const std::filesystem::path& path);

}  // namespace oodlab

#endif
