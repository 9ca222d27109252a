#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "oodlab/dataset.hpp"
#include "oodlab/scoring.hpp"

using namespace oodlab;
namespace fs = std::filesystem;

namespace {

Dataset two_blob_dataset(std::size_t per_class, double sigma, std::uint64_t seed) {
    MixtureSpec spec;
    spec.means = Matrix(2, 2);
    spec.means.set_row(0, {-1.5, 0.0});
    spec.means.set_row(1, {1.5, 0.0});
    spec.sigma = sigma;
    spec.per_class = per_class;
    Rng rng(seed);
    return gen_id(spec, rng);
}

TrainedModel train_tiny(ObjectiveKind kind, const Dataset& data, std::uint64_t seed) {
    ObjectiveConfig objective;
    objective.kind = kind;
    objective.embedding_dim = 4;
    objective.tau = 0.5;
    objective.lambda = 0.01;
    OptimizerConfig opt{.lr0 = kind == ObjectiveKind::triplet ? 0.01 : 0.05,
                        .epochs = 8,
                        .batch_size = 16};
    Rng init(seed), tr(seed + 1);
    return train_from_config(data, {8, 8}, objective, opt, init, tr);
}

}  // namespace

TEST_CASE("argmax prediction with lowest-index ties") {
    CHECK(predict_argmax(Probabilities({0.1, 0.7, 0.2})) == 1);
    CHECK(predict_argmax(Probabilities({0.25, 0.25, 0.25, 0.25})) == 0);
    CHECK(predict_argmax(Probabilities({0.0, 0.0, 1.0})) == 2);
}

TEST_CASE("msp score examples") {
    CHECK(msp_score(Probabilities({0.7, 0.2, 0.1})) == doctest::Approx(-0.7));
    CHECK(msp_score(Probabilities(Vector(10, 0.1))) == doctest::Approx(-0.1));
    CHECK(msp_score(Probabilities({0.0, 1.0})) == doctest::Approx(-1.0));
}

TEST_CASE("entropy score examples") {
    CHECK(entropy_score(Probabilities({1.0, 0.0})) == 0.0);  // 0 ln 0 := 0
    CHECK(entropy_score(Probabilities(Vector(10, 0.1))) == doctest::Approx(std::log(10.0)));
    CHECK(entropy_score(Probabilities({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("msp and entropy depend only on the probability multiset") {
    Vector p = {0.5, 0.3, 0.2};
    Vector permuted = {0.2, 0.5, 0.3};
    CHECK(msp_score(Probabilities(p)) == msp_score(Probabilities(permuted)));
    CHECK(entropy_score(Probabilities(p)) ==
          doctest::Approx(entropy_score(Probabilities(permuted))).epsilon(1e-15));
}

TEST_CASE("knn prediction and score") {
    TrainEmbeddingIndex index;
    index.embeddings = Matrix(2, 2);
    index.embeddings.set_row(0, {0.0, 2.0});  // distance 4 from origin
    index.embeddings.set_row(1, {1.0, 0.0});  // distance 1 from origin
    index.labels = {3, 5};

    auto [label, score] = knn_predict_and_score({0.0, 0.0}, index);
    CHECK(label == 5);
    CHECK(score == doctest::Approx(1.0));

    auto [same, zero] = knn_predict_and_score({0.0, 2.0}, index);
    CHECK(same == 3);
    CHECK(zero == 0.0);

    TrainEmbeddingIndex empty;
    empty.embeddings = Matrix(0, 2);
    CHECK_THROWS_AS(knn_predict_and_score({0.0, 0.0}, empty), std::runtime_error);
}

TEST_CASE("knn matches an exhaustive oracle on random points") {
    Rng rng(99);
    TrainEmbeddingIndex index;
    index.embeddings = Matrix(200, 3);
    for (double& v : index.embeddings.storage()) v = rng.next_gaussian();
    index.labels.resize(200);
    for (int& label : index.labels) label = static_cast<int>(rng.next_below(4));

    for (int trial = 0; trial < 1000; ++trial) {
        Vector q(3);
        for (double& v : q) v = 2.0 * rng.next_gaussian();
        auto [label, score] = knn_predict_and_score(q, index);

        double best = std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < 200; ++i) {
            double d = squared_euclidean(q, index.embeddings.row_vector(i));
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        CHECK(label == index.labels[best_i]);
        CHECK(score == best);
    }
}

TEST_CASE("prototype probabilities and prediction") {
    PrototypeBank bank;
    bank.prototypes = Matrix(2, 1);
    bank.prototypes.set_row(0, {0.0});
    bank.prototypes.set_row(1, {1.0});

    // Equal distances: uniform.
    Probabilities mid = prototype_probs({0.5}, bank, 1.0);
    CHECK(mid[0] == doctest::Approx(0.5));

    // Distances (0, 1) at tau = 1: logistic probabilities.
    Probabilities at0 = prototype_probs({0.0}, bank, 1.0);
    CHECK(at0[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(at0[1] == doctest::Approx(0.2689).epsilon(1e-4));
    CHECK(prototype_predict({0.0}, bank) == 0);
}

TEST_CASE("argmin distance equals argmax probability across temperatures") {
    Rng rng(123);
    PrototypeBank bank;
    bank.prototypes = Matrix(5, 3);
    for (double& v : bank.prototypes.storage()) v = rng.next_gaussian();
    for (int trial = 0; trial < 1000; ++trial) {
        Vector e(3);
        for (double& v : e) v = 2.0 * rng.next_gaussian();
        int by_distance = prototype_predict(e, bank);
        for (double tau : {0.1, 1.0, 10.0}) {
            CHECK(predict_argmax(prototype_probs(e, bank, tau)) == by_distance);
        }
    }
}

TEST_CASE("scorer resolution follows the published rules") {
    CHECK(resolve_scorer(ScorerRule::automatic, ObjectiveKind::cross_entropy) ==
          ScorerRule::entropy);
    CHECK(resolve_scorer(ScorerRule::automatic, ObjectiveKind::average_precision) ==
          ScorerRule::entropy);
    CHECK(resolve_scorer(ScorerRule::automatic, ObjectiveKind::triplet) == ScorerRule::knn);
    CHECK(resolve_scorer(ScorerRule::automatic, ObjectiveKind::prototype) ==
          ScorerRule::entropy);
    CHECK(resolve_scorer(ScorerRule::msp, ObjectiveKind::prototype) == ScorerRule::msp);
}

TEST_CASE("incompatible scorer and objective combinations are rejected") {
    CHECK_THROWS_AS(check_scorer_compatible(ScorerRule::knn, ObjectiveKind::cross_entropy),
                    ConfigError);
    CHECK_THROWS_AS(check_scorer_compatible(ScorerRule::knn, ObjectiveKind::average_precision),
                    ConfigError);
    CHECK_THROWS_AS(check_scorer_compatible(ScorerRule::msp, ObjectiveKind::triplet),
                    ConfigError);
    CHECK_THROWS_AS(check_scorer_compatible(ScorerRule::entropy, ObjectiveKind::triplet),
                    ConfigError);
    CHECK_NOTHROW(check_scorer_compatible(ScorerRule::knn, ObjectiveKind::prototype));
    CHECK_NOTHROW(check_scorer_compatible(ScorerRule::entropy, ObjectiveKind::cross_entropy));
}

TEST_CASE("triplet model scores a train example at zero") {
    Dataset data = two_blob_dataset(20, 0.3, 41);
    TrainedModel model = train_tiny(ObjectiveKind::triplet, data, 42);
    ScoreSet scores = score_dataset(model, data, ScorerRule::automatic);
    CHECK(scores.rule == ScorerRule::knn);
    for (const ScoredExample& e : scores.entries) {
        CHECK(e.score == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("score_dataset is deterministic and finite") {
    Dataset data = two_blob_dataset(15, 0.3, 43);
    for (ObjectiveKind kind : {ObjectiveKind::cross_entropy, ObjectiveKind::prototype,
                               ObjectiveKind::average_precision}) {
        TrainedModel model = train_tiny(kind, data, 44);
        ScoreSet a = score_dataset(model, data, ScorerRule::automatic);
        ScoreSet b = score_dataset(model, data, ScorerRule::automatic);
        REQUIRE(a.entries.size() == data.size());
        for (std::size_t i = 0; i < a.entries.size(); ++i) {
            CHECK(std::isfinite(a.entries[i].score));
            CHECK(a.entries[i].score == b.entries[i].score);
            CHECK(a.entries[i].predicted == b.entries[i].predicted);
        }
    }
}

TEST_CASE("score_dataset rejects incompatible requests") {
    Dataset data = two_blob_dataset(10, 0.3, 45);
    TrainedModel ce = train_tiny(ObjectiveKind::cross_entropy, data, 46);
    CHECK_THROWS_AS(score_dataset(ce, data, ScorerRule::knn), ConfigError);
    TrainedModel triplet = train_tiny(ObjectiveKind::triplet, data, 47);
    CHECK_THROWS_AS(score_dataset(triplet, data, ScorerRule::entropy), ConfigError);
    CHECK_THROWS_AS(score_dataset(triplet, data, ScorerRule::msp), ConfigError);
}

TEST_CASE("prototype model supports knn scoring through its train index") {
    Dataset data = two_blob_dataset(10, 0.3, 48);
    TrainedModel model = train_tiny(ObjectiveKind::prototype, data, 49);
    REQUIRE(model.train_index.has_value());
    ScoreSet scores = score_dataset(model, data, ScorerRule::knn);
    CHECK(scores.rule == ScorerRule::knn);
    for (const ScoredExample& e : scores.entries) {
        CHECK(e.score == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("score csv round trip") {
    Dataset data = two_blob_dataset(8, 0.3, 50);
    TrainedModel model = train_tiny(ObjectiveKind::cross_entropy, data, 51);
    ScoreSet scores = score_dataset(model, data, ScorerRule::entropy);
    fs::path path = fs::temp_directory_path() / "oodlab_scores_test.csv";
    save_scores_csv(scores, path);
    ScoreSet loaded = load_scores_csv(path);
    REQUIRE(loaded.entries.size() == scores.entries.size());
    for (std::size_t i = 0; i < scores.entries.size(); ++i) {
        CHECK(loaded.entries[i].example_id == scores.entries[i].example_id);
        CHECK(loaded.entries[i].role == scores.entries[i].role);
        CHECK(loaded.entries[i].score == scores.entries[i].score);
        CHECK(loaded.entries[i].predicted == scores.entries[i].predicted);
        CHECK(loaded.entries[i].true_label == scores.entries[i].true_label);
    }
}

TEST_CASE("ap scores act as logits") {
    Probabilities p = ap_probs({2.0, 1.0, 0.0});
    Probabilities q = softmax({2.0, 1.0, 0.0});
    for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == q[i]);
    CHECK(predict_argmax(p) == 0);
}
