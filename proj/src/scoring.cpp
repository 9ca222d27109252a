#include "oodlab/scoring.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace oodlab {

const char* scorer_name(ScorerRule rule) {
    switch (rule) {
        case ScorerRule::automatic: return "auto";
        case ScorerRule::msp: return "msp";
        case ScorerRule::entropy: return "entropy";
        case ScorerRule::knn: return "knn";
    }
    return "unknown";
}

ScorerRule scorer_from_name(const std::string& name) {
    if (name == "auto") return ScorerRule::automatic;
    if (name == "msp") return ScorerRule::msp;
    if (name == "entropy") return ScorerRule::entropy;
    if (name == "knn") return ScorerRule::knn;
    throw std::invalid_argument("unknown scorer: " + name +
                                " (expected auto, msp, entropy, or knn)");
}

int predict_argmax(const Probabilities& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[best]) best = i;
    }
    return static_cast<int>(best);
}

double msp_score(const Probabilities& p) {
    double max_p = p[0];
    for (std::size_t i = 1; i < p.size(); ++i) max_p = std::max(max_p, p[i]);
    return -max_p;
}

double entropy_score(const Probabilities& p) {
    double h = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
    return h;
}

std::pair<int, double> knn_predict_and_score(const Vector& embedding,
                                             const TrainEmbeddingIndex& index) {
    if (index.embeddings.rows() == 0) {
        throw std::runtime_error("knn: empty train embedding index");
    }
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < index.embeddings.rows(); ++i) {
        double d = squared_euclidean(embedding, index.embeddings.row_vector(i));
        if (d < best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return {index.labels[best], best_dist};
}

Probabilities prototype_probs(const Vector& embedding, const PrototypeBank& bank, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("prototype_probs: tau must be positive");
    }
    Vector neg_scaled(bank.classes());
    for (std::size_t k = 0; k < bank.classes(); ++k) {
        neg_scaled[k] = -tau * squared_euclidean(embedding, bank.prototypes.row_vector(k));
    }
    return softmax(neg_scaled);
}

int prototype_predict(const Vector& embedding, const PrototypeBank& bank) {
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < bank.classes(); ++k) {
        double d = squared_euclidean(embedding, bank.prototypes.row_vector(k));
        if (d < best_dist) {
            best_dist = d;
            best = k;
        }
    }
    return static_cast<int>(best);
}

Probabilities ap_probs(const Vector& scores) {
    return softmax(scores);
}

ScorerRule resolve_scorer(ScorerRule rule, ObjectiveKind objective) {
    if (rule != ScorerRule::automatic) return rule;
    switch (objective) {
        case ObjectiveKind::cross_entropy: return ScorerRule::entropy;
        case ObjectiveKind::average_precision: return ScorerRule::entropy;
        case ObjectiveKind::triplet: return ScorerRule::knn;
        case ObjectiveKind::prototype: return ScorerRule::entropy;
    }
    throw std::logic_error("resolve_scorer: unhandled objective");
}

void check_scorer_compatible(ScorerRule resolved, ObjectiveKind objective) {
    const bool logits_head = objective == ObjectiveKind::cross_entropy ||
                             objective == ObjectiveKind::average_precision;
    if (resolved == ScorerRule::knn && logits_head) {
        throw ConfigError(std::string("scorer 'knn' needs an embedding head; objective '") +
                          objective_name(objective) +
                          "' trains class logits. Use msp or entropy instead.");
    }
    if ((resolved == ScorerRule::msp || resolved == ScorerRule::entropy) &&
        objective == ObjectiveKind::triplet) {
        throw ConfigError(std::string("scorer '") + scorer_name(resolved) +
                          "' needs class probabilities; triplet models have none. "
                          "Use knn instead.");
    }
    if (resolved == ScorerRule::automatic) {
        throw std::logic_error("check_scorer_compatible: rule not resolved");
    }
}

Vector ScoreSet::scores() const {
    Vector out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) out[i] = entries[i].score;
    return out;
}

std::vector<int> ScoreSet::predictions() const {
    std::vector<int> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) out[i] = entries[i].predicted;
    return out;
}

std::vector<int> ScoreSet::true_labels() const {
    std::vector<int> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) out[i] = entries[i].true_label;
    return out;
}

ScoreSet score_dataset(const TrainedModel& model, const Dataset& dataset, ScorerRule rule) {
    const ScorerRule resolved = resolve_scorer(rule, model.objective.kind);
    check_scorer_compatible(resolved, model.objective.kind);

    if (resolved == ScorerRule::knn && !model.train_index) {
        throw ConfigError("scorer 'knn': checkpoint carries no train-embedding index");
    }
    if (model.objective.kind == ObjectiveKind::prototype && !model.prototypes) {
        throw ConfigError("prototype model: checkpoint carries no prototype bank");
    }

    Matrix outputs = model.net.forward(dataset.features());
    ScoreSet set;
    set.rule = resolved;
    set.entries.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Vector out = outputs.row_vector(i);
        ScoredExample entry;
        entry.example_id = i;
        entry.role = dataset.role;
        entry.true_label = dataset.examples[i].label;

        switch (model.objective.kind) {
            case ObjectiveKind::cross_entropy:
            case ObjectiveKind::average_precision: {
                Probabilities p = softmax(out);
                entry.predicted = predict_argmax(p);
                entry.score = resolved == ScorerRule::msp ? msp_score(p) : entropy_score(p);
                break;
            }
            case ObjectiveKind::prototype: {
                entry.predicted = prototype_predict(out, *model.prototypes);
                if (resolved == ScorerRule::knn) {
                    entry.score = knn_predict_and_score(out, *model.train_index).second;
                } else {
                    Probabilities p = prototype_probs(out, *model.prototypes,
                                                      model.objective.tau);
                    entry.score = resolved == ScorerRule::msp ? msp_score(p) : entropy_score(p);
                }
                break;
            }
            case ObjectiveKind::triplet: {
                auto [label, dist] = knn_predict_and_score(out, *model.train_index);
                entry.predicted = label;
                entry.score = dist;
                break;
            }
        }
        set.entries.push_back(entry);
    }
    return set;
}

void save_scores_csv(const ScoreSet& scores, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "example_id,role,score,pred,true_label\n";
    char buf[40];
    for (const ScoredExample& e : scores.entries) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.score);
        out << e.example_id << "," << role_name(e.role) << "," << buf << "," << e.predicted
            << "," << e.true_label << "\n";
    }
}

ScoreSet load_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "example_id,role,score,pred,true_label") {
        throw ParseError(path.string() + " line 1: unexpected header");
    }
    ScoreSet set;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ScoredExample e;
        char role_buf[32];
        double score = 0.0;
        unsigned long long id = 0;
        if (std::sscanf(line.c_str(), "%llu,%31[^,],%lf,%d,%d", &id, role_buf, &score,
                        &e.predicted, &e.true_label) != 5) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) +
                             ": malformed row");
        }
        e.example_id = static_cast<std::size_t>(id);
        e.role = role_from_name(role_buf);
        e.score = score;
        set.entries.push_back(e);
    }
    return set;
}

}  // namespace oodlab
