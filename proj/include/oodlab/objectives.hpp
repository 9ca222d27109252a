#ifndef OODLAB_OBJECTIVES_HPP
#define OODLAB_OBJECTIVES_HPP

#include <string>
#include <vector>

#include "oodlab/numerics.hpp"

namespace oodlab {

enum class ObjectiveKind { cross_entropy, triplet, prototype, average_precision };
enum class MiningStrategy { random, semi_hard };

const char* objective_name(ObjectiveKind kind);
ObjectiveKind objective_from_name(const std::string& name);
const char* mining_name(MiningStrategy strategy);
MiningStrategy mining_from_name(const std::string& name);

/// Tagged configuration for the four training objectives. Fields that do not
/// apply to the selected kind are ignored.
struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::cross_entropy;
    double margin = 1.0;                               // triplet
    MiningStrategy mining = MiningStrategy::random;    // triplet
    double lambda = 0.01;                              // prototype: center-loss weight
    double tau = 0.1;                                  // prototype: temperature
    std::size_t embedding_dim = 64;                    // triplet / prototype head size
    double delta = 1.0;                                // AP: rank-step smoothing width

    bool uses_embedding_head() const {
        return kind == ObjectiveKind::triplet || kind == ObjectiveKind::prototype;
    }
    void validate() const;
    bool operator==(const ObjectiveConfig&) const = default;
};

/// One learnable prototype vector per class, C x ED.
struct PrototypeBank {
    Matrix prototypes;

    std::size_t classes() const { return prototypes.rows(); }
    std::size_t dim() const { return prototypes.cols(); }
    bool operator==(const PrototypeBank&) const = default;
};

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

struct CrossEntropyResult {
    double loss;
    Vector grad_logits;  // softmax(logits) - onehot(label)
};

CrossEntropyResult ce_loss(const Vector& logits, int label);

struct BatchLossResult {
    double loss;        // mean over the batch
    Matrix grad_outputs;
};

BatchLossResult ce_loss_batch(const Matrix& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Triplet
// ---------------------------------------------------------------------------

struct TripletLossResult {
    double loss;  // max(0, d_ap - d_an + margin), squared Euclidean distances
    Vector grad_anchor;
    Vector grad_positive;
    Vector grad_negative;
};

/// Subgradient 0 exactly at the hinge kink; all gradients zero when inactive.
TripletLossResult triplet_loss(const Vector& anchor, const Vector& positive,
                               const Vector& negative, double margin);

enum class TripletSelection {
    random_pick,       // random-mining negative
    semi_hard,         // satisfies d_ap < d_an < d_ap + margin
    fallback_hardest,  // empty semi-hard set: smallest d_an > d_ap
    fallback_random    // no negative beyond d_ap: uniform over other classes
};

struct Triplet {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;
    double d_ap;
    double d_an;
    TripletSelection selection;
};

/// Emits one triplet per ordered same-label (anchor, positive) pair, anchor !=
/// positive. Negatives: `random` picks uniformly over other-class examples;
/// `semi_hard` picks uniformly over {n : d_ap < d_an < d_ap + margin} and
/// falls back to the hardest negative beyond d_ap, then to random, when that
/// set is empty. Returns empty when the batch has no valid pair.
std::vector<Triplet> mine_triplets(const Matrix& embeddings, const std::vector<int>& labels,
                                   MiningStrategy strategy, double margin, Rng& rng);

// ---------------------------------------------------------------------------
// Prototype (distance-based cross-entropy + center loss)
// ---------------------------------------------------------------------------

struct DceResult {
    double loss;  // -log softmax(-tau * D(e, m_k))[label]
    Vector grad_embedding;
    Matrix grad_prototypes;
};

DceResult dce_loss(const Vector& embedding, const PrototypeBank& bank, int label, double tau);

struct CenterLossResult {
    double loss;  // mean squared distance to the assigned prototype
    Matrix grad_embeddings;
    Matrix grad_prototypes;
};

CenterLossResult center_loss(const Matrix& embeddings, const PrototypeBank& bank,
                             const std::vector<int>& labels);

struct PrototypeTotalResult {
    double loss;  // batch-mean DCE + lambda * center loss
    Matrix grad_embeddings;
    Matrix grad_prototypes;
};

PrototypeTotalResult prototype_total(const Matrix& embeddings, const PrototypeBank& bank,
                                     const std::vector<int>& labels, double lambda, double tau);

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

struct ApClassResult {
    double loss;  // 1 - AP over this score column, smoothed rank step
    Vector grad_scores;
    bool has_both_polarities;
};

/// Smoothed one-class AP loss over a score column. The rank step
/// H(x) is 0 below -delta, linear across [-delta, delta], 1 above, applied to
/// score differences x_ij = s_j - s_i. Gradients use the error-driven
/// assignment: dL/dx_ij = H(x_ij) / (rank(i) * |P|) for positive i,
/// negative j, chained to the scores. Returns zero loss and gradients when
/// the column lacks a positive or a negative.
ApClassResult ap_loss_one_class(const Vector& scores, const std::vector<int>& is_positive,
                                double delta);

struct ApLossResult {
    double loss;  // sum over classes of the one-vs-all AP losses
    Matrix grad_scores;
    int active_classes;  // columns that had both polarities
};

/// One-vs-all over an n x C score matrix: column c treats labels == c as
/// positives. active_classes == 0 means the batch is unusable.
ApLossResult ap_loss(const Matrix& scores, const std::vector<int>& labels, double delta);

/// Hard-step reference: sorts descending (ties broken toward the lower
/// index), accumulates classical cumulative precision at each positive, and
/// returns 1 - AP.
double ap_brute_force(const Vector& scores, const std::vector<int>& is_positive);

}  // namespace oodlab

#endif
