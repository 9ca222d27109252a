#include "oodlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace oodlab {

namespace {

using nlohmann::json;

struct BatchObjective {
    double loss = 0.0;
    Matrix grad_outputs;
    Matrix grad_prototypes;  // empty unless the prototype objective ran
    bool usable = true;
};

BatchObjective eval_batch(const ObjectiveConfig& objective, const Matrix& outputs,
                          const std::vector<int>& labels, const PrototypeBank* bank,
                          Rng& mining_rng) {
    BatchObjective out;
    switch (objective.kind) {
        case ObjectiveKind::cross_entropy: {
            BatchLossResult r = ce_loss_batch(outputs, labels);
            out.loss = r.loss;
            out.grad_outputs = std::move(r.grad_outputs);
            return out;
        }
        case ObjectiveKind::triplet: {
            std::vector<Triplet> triplets =
                mine_triplets(outputs, labels, objective.mining, objective.margin, mining_rng);
            if (triplets.empty()) {
                out.usable = false;
                return out;
            }
            out.grad_outputs = Matrix(outputs.rows(), outputs.cols());
            const double inv_m = 1.0 / static_cast<double>(triplets.size());
            for (const Triplet& t : triplets) {
                TripletLossResult r =
                    triplet_loss(outputs.row_vector(t.anchor), outputs.row_vector(t.positive),
                                 outputs.row_vector(t.negative), objective.margin);
                out.loss += r.loss * inv_m;
                for (std::size_t j = 0; j < outputs.cols(); ++j) {
                    out.grad_outputs.at(t.anchor, j) += r.grad_anchor[j] * inv_m;
                    out.grad_outputs.at(t.positive, j) += r.grad_positive[j] * inv_m;
                    out.grad_outputs.at(t.negative, j) += r.grad_negative[j] * inv_m;
                }
            }
            return out;
        }
        case ObjectiveKind::prototype: {
            PrototypeTotalResult r =
                prototype_total(outputs, *bank, labels, objective.lambda, objective.tau);
            out.loss = r.loss;
            out.grad_outputs = std::move(r.grad_embeddings);
            out.grad_prototypes = std::move(r.grad_prototypes);
            return out;
        }
        case ObjectiveKind::average_precision: {
            ApLossResult r = ap_loss(outputs, labels, objective.delta);
            if (r.active_classes == 0) {
                out.usable = false;
                return out;
            }
            out.loss = r.loss;
            out.grad_outputs = std::move(r.grad_scores);
            return out;
        }
    }
    throw std::logic_error("eval_batch: unhandled objective");
}

Matrix embed_dataset(const Network& net, const Dataset& data) {
    return net.forward(data.features());
}

}  // namespace

PrototypeBank init_prototypes(const Network& net, const Dataset& train_set) {
    if (train_set.num_classes < 1 || train_set.examples.empty()) {
        throw std::invalid_argument("init_prototypes: need a labeled train set");
    }
    Matrix embeddings = embed_dataset(net, train_set);
    PrototypeBank bank;
    bank.prototypes = Matrix(static_cast<std::size_t>(train_set.num_classes), embeddings.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(train_set.num_classes), 0);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        auto k = static_cast<std::size_t>(train_set.examples[i].label);
        ++counts[k];
        for (std::size_t j = 0; j < embeddings.cols(); ++j) {
            bank.prototypes.at(k, j) += embeddings.at(i, j);
        }
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) {
            throw std::invalid_argument("init_prototypes: class " + std::to_string(k) +
                                        " has no train examples");
        }
        for (std::size_t j = 0; j < bank.prototypes.cols(); ++j) {
            bank.prototypes.at(k, j) /= static_cast<double>(counts[k]);
        }
    }
    return bank;
}

TrainedModel train(Network net, const Dataset& train_set, const ObjectiveConfig& objective,
                   const OptimizerConfig& opt, Rng& rng) {
    objective.validate();
    opt.validate();
    train_set.validate();
    if (train_set.examples.empty()) {
        throw std::invalid_argument("train: empty train set");
    }
    const bool wants_embedding = objective.uses_embedding_head();
    if ((net.config.head == HeadKind::embedding) != wants_embedding) {
        throw std::invalid_argument(std::string("train: objective '") +
                                    objective_name(objective.kind) + "' needs a " +
                                    (wants_embedding ? "embedding" : "logits") + " head");
    }

    Rng shuffle_rng(rng.next_u64());
    Rng mining_rng(rng.next_u64());

    TrainedModel model;
    model.objective = objective;
    if (objective.kind == ObjectiveKind::prototype) {
        model.prototypes = init_prototypes(net, train_set);
    }

    SgdState net_state = SgdState::zeros_like(net);
    Matrix proto_velocity;
    if (model.prototypes) {
        proto_velocity = Matrix(model.prototypes->prototypes.rows(),
                                model.prototypes->prototypes.cols());
    }

    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto batch_size = static_cast<std::size_t>(opt.batch_size);

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, opt.epochs, opt.lr0);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t count = std::min(batch_size, n - start);
            Matrix batch(count, train_set.dim);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i) {
                const Example& e = train_set.examples[order[start + i]];
                batch.set_row(i, e.x);
                labels[i] = e.label;
            }

            ForwardCache cache;
            Matrix outputs = net.forward(batch, cache);
            BatchObjective result = eval_batch(objective, outputs, labels,
                                               model.prototypes ? &*model.prototypes : nullptr,
                                               mining_rng);
            if (!result.usable) {
                ++model.diagnostics.skipped_batches;
                std::fprintf(stderr,
                             "warning: skipping batch at epoch %d: objective '%s' found no "
                             "usable structure\n",
                             epoch, objective_name(objective.kind));
                continue;
            }

            Gradients grads = backward(net, cache, result.grad_outputs);
            sgd_apply(net, grads, net_state, lr, opt.momentum, opt.weight_decay);
            if (model.prototypes) {
                // Prototypes are locations, not weights: momentum SGD without decay.
                Matrix& protos = model.prototypes->prototypes;
                if (!all_finite(result.grad_prototypes)) {
                    throw std::runtime_error("train: non-finite prototype gradient");
                }
                for (std::size_t i = 0; i < protos.storage().size(); ++i) {
                    double& v = proto_velocity.storage()[i];
                    v = opt.momentum * v + result.grad_prototypes.storage()[i];
                    protos.storage()[i] -= lr * v;
                }
            }
            epoch_loss += result.loss;
            ++batches;
        }
        model.diagnostics.epoch_losses.push_back(batches > 0 ? epoch_loss / static_cast<double>(batches)
                                                             : 0.0);
        model.diagnostics.epoch_lrs.push_back(lr);
    }

    model.net = std::move(net);
    if (wants_embedding) {
        TrainEmbeddingIndex index;
        index.embeddings = embed_dataset(model.net, train_set);
        index.labels = train_set.labels();
        model.train_index = std::move(index);
    }
    return model;
}

TrainedModel train_from_config(const Dataset& train_set, const std::vector<std::size_t>& hidden,
                               const ObjectiveConfig& objective, const OptimizerConfig& opt,
                               Rng& init_rng, Rng& train_rng) {
    NetworkConfig net_config;
    net_config.input_dim = train_set.dim;
    net_config.hidden = hidden;
    if (objective.uses_embedding_head()) {
        net_config.head = HeadKind::embedding;
        net_config.head_dim = objective.embedding_dim;
    } else {
        net_config.head = HeadKind::logits;
        net_config.head_dim = static_cast<std::size_t>(train_set.num_classes);
    }
    Network net = Network::init(net_config, init_rng);
    return train(std::move(net), train_set, objective, opt, train_rng);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    Vector data = j.at("data").get<Vector>();
    if (data.size() != m.storage().size()) {
        throw std::invalid_argument("checkpoint: matrix payload size mismatch");
    }
    m.storage() = std::move(data);
    return m;
}

json objective_to_json(const ObjectiveConfig& o) {
    return json{{"objective", objective_name(o.kind)},
                {"margin", o.margin},
                {"mining", mining_name(o.mining)},
                {"lambda", o.lambda},
                {"tau", o.tau},
                {"embedding_dim", o.embedding_dim},
                {"delta", o.delta}};
}

ObjectiveConfig objective_from_json(const json& j) {
    ObjectiveConfig o;
    o.kind = objective_from_name(j.at("objective").get<std::string>());
    o.margin = j.at("margin").get<double>();
    o.mining = mining_from_name(j.at("mining").get<std::string>());
    o.lambda = j.at("lambda").get<double>();
    o.tau = j.at("tau").get<double>();
    o.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    o.delta = j.at("delta").get<double>();
    return o;
}

}  // namespace

std::string checkpoint_to_string(const TrainedModel& model) {
    json j;
    j["format"] = "oodlab-checkpoint-v1";
    j["config"] = {{"input_dim", model.net.config.input_dim},
                   {"hidden", model.net.config.hidden},
                   {"head", head_kind_name(model.net.config.head)},
                   {"head_dim", model.net.config.head_dim}};
    j["weights"] = json::array();
    j["biases"] = json::array();
    for (std::size_t l = 0; l < model.net.weights.size(); ++l) {
        j["weights"].push_back(matrix_to_json(model.net.weights[l]));
        j["biases"].push_back(model.net.biases[l]);
    }
    j["objective"] = objective_to_json(model.objective);
    if (model.prototypes) {
        j["prototypes"] = matrix_to_json(model.prototypes->prototypes);
    }
    if (model.train_index) {
        j["train_index"] = {{"embeddings", matrix_to_json(model.train_index->embeddings)},
                            {"labels", model.train_index->labels}};
    }
    j["diagnostics"] = {{"epoch_losses", model.diagnostics.epoch_losses},
                        {"epoch_lrs", model.diagnostics.epoch_lrs},
                        {"skipped_batches", model.diagnostics.skipped_batches}};
    return j.dump(2);
}

TrainedModel checkpoint_from_string(const std::string& text) {
    json j = json::parse(text);
    if (j.value("format", "") != "oodlab-checkpoint-v1") {
        throw std::invalid_argument("checkpoint: unknown format tag");
    }
    TrainedModel model;
    const json& cfg = j.at("config");
    model.net.config.input_dim = cfg.at("input_dim").get<std::size_t>();
    model.net.config.hidden = cfg.at("hidden").get<std::vector<std::size_t>>();
    model.net.config.head = head_kind_from_name(cfg.at("head").get<std::string>());
    model.net.config.head_dim = cfg.at("head_dim").get<std::size_t>();
    for (const json& w : j.at("weights")) {
        model.net.weights.push_back(matrix_from_json(w));
    }
    for (const json& b : j.at("biases")) {
        model.net.biases.push_back(b.get<Vector>());
    }
    model.objective = objective_from_json(j.at("objective"));
    if (j.contains("prototypes")) {
        PrototypeBank bank;
        bank.prototypes = matrix_from_json(j.at("prototypes"));
        model.prototypes = std::move(bank);
    }
    if (j.contains("train_index")) {
        TrainEmbeddingIndex index;
        index.embeddings = matrix_from_json(j.at("train_index").at("embeddings"));
        index.labels = j.at("train_index").at("labels").get<std::vector<int>>();
        model.train_index = std::move(index);
    }
    const json& diag = j.at("diagnostics");
    model.diagnostics.epoch_losses = diag.at("epoch_losses").get<Vector>();
    model.diagnostics.epoch_lrs = diag.at("epoch_lrs").get<Vector>();
    model.diagnostics.skipped_batches = diag.at("skipped_batches").get<int>();
    return model;
}

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << checkpoint_to_string(model) << "\n";
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return checkpoint_from_string(buffer.str());
}

}  // namespace oodlab
