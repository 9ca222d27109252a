#include "oodlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace oodlab {

const char* objective_name(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::cross_entropy: return "ce";
        case ObjectiveKind::triplet: return "triplet";
        case ObjectiveKind::prototype: return "prototype";
        case ObjectiveKind::average_precision: return "ap";
    }
    return "unknown";
}

ObjectiveKind objective_from_name(const std::string& name) {
    if (name == "ce") return ObjectiveKind::cross_entropy;
    if (name == "triplet") return ObjectiveKind::triplet;
    if (name == "prototype") return ObjectiveKind::prototype;
    if (name == "ap") return ObjectiveKind::average_precision;
    throw std::invalid_argument("unknown objective: " + name +
                                " (expected ce, triplet, prototype, or ap)");
}

const char* mining_name(MiningStrategy strategy) {
    return strategy == MiningStrategy::random ? "random" : "semi_hard";
}

MiningStrategy mining_from_name(const std::string& name) {
    if (name == "random") return MiningStrategy::random;
    if (name == "semi_hard") return MiningStrategy::semi_hard;
    throw std::invalid_argument("unknown mining strategy: " + name);
}

void ObjectiveConfig::validate() const {
    if (!(margin > 0.0)) throw std::invalid_argument("objective: margin must be positive");
    if (lambda < 0.0) throw std::invalid_argument("objective: lambda must be >= 0");
    if (!(tau > 0.0)) throw std::invalid_argument("objective: tau must be positive");
    if (!(delta > 0.0)) throw std::invalid_argument("objective: delta must be positive");
    if (uses_embedding_head() && embedding_dim < 1) {
        throw std::invalid_argument("objective: embedding_dim must be >= 1");
    }
}

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

CrossEntropyResult ce_loss(const Vector& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw std::invalid_argument("ce_loss: label out of range");
    }
    Probabilities p = softmax(logits);
    CrossEntropyResult out;
    // log softmax computed directly from shifted logits for accuracy
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - max_logit);
    out.loss = -(logits[label] - max_logit - std::log(sum));
    out.grad_logits = p.values();
    out.grad_logits[static_cast<std::size_t>(label)] -= 1.0;
    return out;
}

BatchLossResult ce_loss_batch(const Matrix& logits, const std::vector<int>& labels) {
    if (logits.rows() != labels.size() || logits.rows() == 0) {
        throw std::invalid_argument("ce_loss_batch: shape mismatch");
    }
    BatchLossResult out{0.0, Matrix(logits.rows(), logits.cols())};
    const double inv_n = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        CrossEntropyResult r = ce_loss(logits.row_vector(i), labels[i]);
        out.loss += r.loss * inv_n;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            out.grad_outputs.at(i, c) = r.grad_logits[c] * inv_n;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Triplet
// ---------------------------------------------------------------------------

TripletLossResult triplet_loss(const Vector& anchor, const Vector& positive,
                               const Vector& negative, double margin) {
    double d_ap = squared_euclidean(anchor, positive);
    double d_an = squared_euclidean(anchor, negative);
    double hinge = d_ap - d_an + margin;

    TripletLossResult out;
    out.grad_anchor.assign(anchor.size(), 0.0);
    out.grad_positive.assign(anchor.size(), 0.0);
    out.grad_negative.assign(anchor.size(), 0.0);
    if (hinge <= 0.0) {  // inactive, and subgradient 0 at the kink
        out.loss = 0.0;
        return out;
    }
    out.loss = hinge;
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        out.grad_anchor[i] = 2.0 * (negative[i] - positive[i]);
        out.grad_positive[i] = -2.0 * (anchor[i] - positive[i]);
        out.grad_negative[i] = 2.0 * (anchor[i] - negative[i]);
    }
    return out;
}

std::vector<Triplet> mine_triplets(const Matrix& embeddings, const std::vector<int>& labels,
                                   MiningStrategy strategy, double margin, Rng& rng) {
    const std::size_t n = embeddings.rows();
    if (labels.size() != n) {
        throw std::invalid_argument("mine_triplets: label count mismatch");
    }
    std::vector<Triplet> out;

    // Pairwise squared distances, computed once per batch.
    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = squared_euclidean(embeddings.row_vector(i), embeddings.row_vector(j));
            dist.at(i, j) = d;
            dist.at(j, i) = d;
        }
    }

    std::vector<std::size_t> semi_hard_set;
    std::vector<std::size_t> negatives;
    for (std::size_t a = 0; a < n; ++a) {
        negatives.clear();
        for (std::size_t k = 0; k < n; ++k) {
            if (labels[k] != labels[a]) negatives.push_back(k);
        }
        if (negatives.empty()) continue;
        for (std::size_t p = 0; p < n; ++p) {
            if (p == a || labels[p] != labels[a]) continue;
            const double d_ap = dist.at(a, p);

            Triplet t;
            t.anchor = a;
            t.positive = p;
            t.d_ap = d_ap;
            if (strategy == MiningStrategy::random) {
                t.negative = negatives[rng.next_below(negatives.size())];
                t.selection = TripletSelection::random_pick;
            } else {
                semi_hard_set.clear();
                for (std::size_t neg : negatives) {
                    double d_an = dist.at(a, neg);
                    if (d_ap < d_an && d_an < d_ap + margin) semi_hard_set.push_back(neg);
                }
                if (!semi_hard_set.empty()) {
                    t.negative = semi_hard_set[rng.next_below(semi_hard_set.size())];
                    t.selection = TripletSelection::semi_hard;
                } else {
                    // Hardest negative beyond the positive, then random.
                    std::size_t best = n;
                    double best_d = std::numeric_limits<double>::infinity();
                    for (std::size_t neg : negatives) {
                        double d_an = dist.at(a, neg);
                        if (d_an > d_ap && d_an < best_d) {
                            best_d = d_an;
                            best = neg;
                        }
                    }
                    if (best < n) {
                        t.negative = best;
                        t.selection = TripletSelection::fallback_hardest;
                    } else {
                        t.negative = negatives[rng.next_below(negatives.size())];
                        t.selection = TripletSelection::fallback_random;
                    }
                }
            }
            t.d_an = dist.at(a, t.negative);
            out.push_back(t);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prototype
// ---------------------------------------------------------------------------

DceResult dce_loss(const Vector& embedding, const PrototypeBank& bank, int label, double tau) {
    const std::size_t c = bank.classes();
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
        throw std::invalid_argument("dce_loss: label out of range");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("dce_loss: tau must be positive");
    }
    Vector neg_scaled(c);
    Vector dist(c);
    for (std::size_t k = 0; k < c; ++k) {
        dist[k] = squared_euclidean(embedding, bank.prototypes.row_vector(k));
        neg_scaled[k] = -tau * dist[k];
    }
    Probabilities q = softmax(neg_scaled);

    DceResult out;
    double max_z = *std::max_element(neg_scaled.begin(), neg_scaled.end());
    double sum = 0.0;
    for (double z : neg_scaled) sum += std::exp(z - max_z);
    out.loss = -(neg_scaled[label] - max_z - std::log(sum));

    out.grad_embedding.assign(embedding.size(), 0.0);
    out.grad_prototypes = Matrix(c, bank.dim());
    for (std::size_t k = 0; k < c; ++k) {
        // dL/d dist_k = tau * ([k == label] - q_k)
        double coeff = tau * ((static_cast<int>(k) == label ? 1.0 : 0.0) - q[k]);
        for (std::size_t j = 0; j < embedding.size(); ++j) {
            double diff = embedding[j] - bank.prototypes.at(k, j);
            out.grad_embedding[j] += coeff * 2.0 * diff;
            out.grad_prototypes.at(k, j) = -coeff * 2.0 * diff;
        }
    }
    return out;
}

CenterLossResult center_loss(const Matrix& embeddings, const PrototypeBank& bank,
                             const std::vector<int>& labels) {
    const std::size_t n = embeddings.rows();
    if (labels.size() != n || n == 0) {
        throw std::invalid_argument("center_loss: shape mismatch");
    }
    CenterLossResult out{0.0, Matrix(n, embeddings.cols()), Matrix(bank.classes(), bank.dim())};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= bank.classes()) {
            throw std::invalid_argument("center_loss: label out of range");
        }
        for (std::size_t j = 0; j < embeddings.cols(); ++j) {
            double diff = embeddings.at(i, j) - bank.prototypes.at(static_cast<std::size_t>(y), j);
            out.loss += diff * diff * inv_n;
            out.grad_embeddings.at(i, j) = 2.0 * diff * inv_n;
            out.grad_prototypes.at(static_cast<std::size_t>(y), j) -= 2.0 * diff * inv_n;
        }
    }
    return out;
}

PrototypeTotalResult prototype_total(const Matrix& embeddings, const PrototypeBank& bank,
                                     const std::vector<int>& labels, double lambda, double tau) {
    const std::size_t n = embeddings.rows();
    if (labels.size() != n || n == 0) {
        throw std::invalid_argument("prototype_total: shape mismatch");
    }
    PrototypeTotalResult out{0.0, Matrix(n, embeddings.cols()),
                             Matrix(bank.classes(), bank.dim())};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        DceResult r = dce_loss(embeddings.row_vector(i), bank, labels[i], tau);
        out.loss += r.loss * inv_n;
        for (std::size_t j = 0; j < embeddings.cols(); ++j) {
            out.grad_embeddings.at(i, j) += r.grad_embedding[j] * inv_n;
        }
        for (std::size_t k = 0; k < bank.classes(); ++k) {
            for (std::size_t j = 0; j < bank.dim(); ++j) {
                out.grad_prototypes.at(k, j) += r.grad_prototypes.at(k, j) * inv_n;
            }
        }
    }
    CenterLossResult center = center_loss(embeddings, bank, labels);
    out.loss += lambda * center.loss;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < embeddings.cols(); ++j) {
            out.grad_embeddings.at(i, j) += lambda * center.grad_embeddings.at(i, j);
        }
    }
    for (std::size_t k = 0; k < bank.classes(); ++k) {
        for (std::size_t j = 0; j < bank.dim(); ++j) {
            out.grad_prototypes.at(k, j) += lambda * center.grad_prototypes.at(k, j);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

namespace {

// Piecewise-linear rank step: 0 below -delta, 1 above +delta.
double smoothed_step(double x, double delta) {
    if (x < -delta) return 0.0;
    if (x > delta) return 1.0;
    return x / (2.0 * delta) + 0.5;
}

}  // namespace

ApClassResult ap_loss_one_class(const Vector& scores, const std::vector<int>& is_positive,
                                double delta) {
    const std::size_t n = scores.size();
    if (is_positive.size() != n) {
        throw std::invalid_argument("ap_loss_one_class: length mismatch");
    }
    if (!(delta > 0.0)) {
        throw std::invalid_argument("ap_loss_one_class: delta must be positive");
    }
    std::vector<std::size_t> positives, negatives;
    for (std::size_t i = 0; i < n; ++i) {
        (is_positive[i] ? positives : negatives).push_back(i);
    }
    ApClassResult out;
    out.grad_scores.assign(n, 0.0);
    out.has_both_polarities = !positives.empty() && !negatives.empty();
    out.loss = 0.0;
    if (!out.has_both_polarities) return out;

    const double inv_p = 1.0 / static_cast<double>(positives.size());
    double mean_prec = 0.0;
    for (std::size_t i : positives) {
        double rank = 1.0;
        double rank_pos = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            double h = smoothed_step(scores[k] - scores[i], delta);
            rank += h;
            if (is_positive[k]) rank_pos += h;
        }
        mean_prec += (rank_pos / rank) * inv_p;
        // Error-driven update for the primary terms (positive i vs negative j):
        // dL/dx_ij := H(x_ij) / (rank(i) * |P|) with x_ij = s_j - s_i.
        for (std::size_t j : negatives) {
            double primary = smoothed_step(scores[j] - scores[i], delta) / rank;
            double g = primary * inv_p;
            out.grad_scores[j] += g;
            out.grad_scores[i] -= g;
        }
    }
    out.loss = 1.0 - mean_prec;
    return out;
}

ApLossResult ap_loss(const Matrix& scores, const std::vector<int>& labels, double delta) {
    const std::size_t n = scores.rows();
    const std::size_t c = scores.cols();
    if (labels.size() != n || n == 0) {
        throw std::invalid_argument("ap_loss: shape mismatch");
    }
    ApLossResult out{0.0, Matrix(n, c), 0};
    Vector column(n);
    std::vector<int> positive(n);
    for (std::size_t cls = 0; cls < c; ++cls) {
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = scores.at(i, cls);
            positive[i] = labels[i] == static_cast<int>(cls) ? 1 : 0;
        }
        ApClassResult r = ap_loss_one_class(column, positive, delta);
        if (!r.has_both_polarities) continue;
        ++out.active_classes;
        out.loss += r.loss;
        for (std::size_t i = 0; i < n; ++i) {
            out.grad_scores.at(i, cls) += r.grad_scores[i];
        }
    }
    return out;
}

double ap_brute_force(const Vector& scores, const std::vector<int>& is_positive) {
    const std::size_t n = scores.size();
    if (is_positive.size() != n) {
        throw std::invalid_argument("ap_brute_force: length mismatch");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;  // ties broken by index
    });
    std::size_t total_positives = 0;
    for (int p : is_positive) total_positives += p != 0;
    if (total_positives == 0) {
        throw std::invalid_argument("ap_brute_force: no positive example");
    }
    double ap = 0.0;
    std::size_t positives_seen = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (is_positive[order[r]]) {
            ++positives_seen;
            ap += static_cast<double>(positives_seen) / static_cast<double>(r + 1);
        }
    }
    return 1.0 - ap / static_cast<double>(total_positives);
}

}  // namespace oodlab
