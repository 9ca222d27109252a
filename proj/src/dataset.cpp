#include "oodlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

namespace oodlab {

namespace {

bool is_id_role(DatasetRole role) {
    return role == DatasetRole::id_train || role == DatasetRole::id_val ||
           role == DatasetRole::id_test;
}

Vector gaussian_vector(std::size_t dim, Rng& rng) {
    Vector v(dim);
    for (double& x : v) x = rng.next_gaussian();
    return v;
}

}  // namespace

const char* role_name(DatasetRole role) {
    switch (role) {
        case DatasetRole::id_train: return "id_train";
        case DatasetRole::id_val: return "id_val";
        case DatasetRole::id_test: return "id_test";
        case DatasetRole::near_ood: return "near_ood";
        case DatasetRole::far_ood: return "far_ood";
    }
    return "unknown";
}

DatasetRole role_from_name(const std::string& name) {
    if (name == "id_train") return DatasetRole::id_train;
    if (name == "id_val") return DatasetRole::id_val;
    if (name == "id_test") return DatasetRole::id_test;
    if (name == "near_ood") return DatasetRole::near_ood;
    if (name == "far_ood") return DatasetRole::far_ood;
    throw std::invalid_argument("unknown dataset role: " + name);
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const Example& e = examples[i];
        if (e.x.size() != dim) {
            throw std::invalid_argument("dataset: example " + std::to_string(i) +
                                        " has dimension " + std::to_string(e.x.size()) +
                                        ", expected " + std::to_string(dim));
        }
        if (!all_finite(e.x)) {
            throw std::invalid_argument("dataset: example " + std::to_string(i) +
                                        " has non-finite features");
        }
        if (is_id_role(role)) {
            if (e.label < 0 || e.label >= num_classes) {
                throw std::invalid_argument("dataset: ID example " + std::to_string(i) +
                                            " has out-of-range label " +
                                            std::to_string(e.label));
            }
        } else if (e.label != kOodLabel) {
            throw std::invalid_argument("dataset: OOD example " + std::to_string(i) +
                                        " must carry label -1");
        }
    }
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) out[i] = examples[i].label;
    return out;
}

Matrix Dataset::features() const {
    Matrix m(examples.size(), dim);
    for (std::size_t i = 0; i < examples.size(); ++i) m.set_row(i, examples[i].x);
    return m;
}

void MixtureSpec::validate() const {
    if (means.rows() < 2) {
        throw std::invalid_argument("mixture spec: need at least 2 classes");
    }
    if (means.cols() < 1) {
        throw std::invalid_argument("mixture spec: dimension must be >= 1");
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("mixture spec: sigma must be positive");
    }
    if (per_class < 1) {
        throw std::invalid_argument("mixture spec: per_class must be >= 1");
    }
    if (!all_finite(means)) {
        throw std::invalid_argument("mixture spec: non-finite mean");
    }
}

Matrix circle_means(std::size_t classes, std::size_t dim, double radius) {
    if (dim < 2) {
        throw std::invalid_argument("circle_means: dimension must be >= 2");
    }
    Matrix means(classes, dim, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
        double angle = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(classes);
        means.at(k, 0) = radius * std::cos(angle);
        means.at(k, 1) = radius * std::sin(angle);
    }
    return means;
}

Dataset gen_id(const MixtureSpec& spec, Rng& rng) {
    spec.validate();
    Dataset out;
    out.role = DatasetRole::id_train;
    out.dim = spec.dim();
    out.num_classes = static_cast<int>(spec.classes());
    out.examples.reserve(spec.classes() * spec.per_class);
    for (std::size_t k = 0; k < spec.classes(); ++k) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            Example e;
            e.x.resize(spec.dim());
            for (std::size_t j = 0; j < spec.dim(); ++j) {
                e.x[j] = spec.means.at(k, j) + spec.sigma * rng.next_gaussian();
            }
            e.label = static_cast<int>(k);
            out.examples.push_back(std::move(e));
        }
    }
    return out;
}

Dataset gen_near_ood(const MixtureSpec& spec, std::size_t m, Rng& rng) {
    spec.validate();
    if (m < 1) {
        throw std::invalid_argument("gen_near_ood: m must be >= 1");
    }
    const std::size_t c = spec.classes();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t a = k, b = (k + 1) % c;
        if (a > b) std::swap(a, b);
        if (std::find(pairs.begin(), pairs.end(), std::make_pair(a, b)) == pairs.end()) {
            pairs.emplace_back(a, b);
        }
    }
    Dataset out;
    out.role = DatasetRole::near_ood;
    out.dim = spec.dim();
    out.num_classes = static_cast<int>(c);
    out.examples.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& [a, b] = pairs[i % pairs.size()];
        Example e;
        e.x.resize(spec.dim());
        for (std::size_t j = 0; j < spec.dim(); ++j) {
            double mid = 0.5 * (spec.means.at(a, j) + spec.means.at(b, j));
            e.x[j] = mid + spec.sigma * rng.next_gaussian();
        }
        out.examples.push_back(std::move(e));
    }
    return out;
}

Dataset gen_far_ood(const MixtureSpec& spec, std::size_t m, Rng& rng) {
    spec.validate();
    if (m < 1) {
        throw std::invalid_argument("gen_far_ood: m must be >= 1");
    }
    double max_norm = 0.0;
    for (std::size_t k = 0; k < spec.classes(); ++k) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < spec.dim(); ++j) {
            norm2 += spec.means.at(k, j) * spec.means.at(k, j);
        }
        max_norm = std::max(max_norm, std::sqrt(norm2));
    }
    const double inner_radius = 4.0 * max_norm + 4.0 * spec.sigma;

    Dataset out;
    out.role = DatasetRole::far_ood;
    out.dim = spec.dim();
    out.num_classes = static_cast<int>(spec.classes());
    out.examples.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        Vector dir;
        double norm = 0.0;
        do {
            dir = gaussian_vector(spec.dim(), rng);
            norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
        } while (norm < 1e-12);
        double radius = inner_radius * (1.0 + 0.25 * rng.next_double());
        Example e;
        e.x.resize(spec.dim());
        for (std::size_t j = 0; j < spec.dim(); ++j) {
            e.x[j] = radius * dir[j] / norm;
        }
        out.examples.push_back(std::move(e));
    }
    return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    fields.push_back(current);
    return fields;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& message) {
    throw ParseError(path.string() + " line " + std::to_string(line_no) + ": " + message);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, DatasetRole role) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": empty file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header = split_fields(line);
    if (header.size() < 2 || header.back() != "y") {
        parse_fail(path, 1, "expected header x0,...,x{d-1},y");
    }
    const std::size_t dim = header.size() - 1;
    for (std::size_t j = 0; j < dim; ++j) {
        if (header[j] != "x" + std::to_string(j)) {
            parse_fail(path, 1, "unknown header field '" + header[j] + "'");
        }
    }

    Dataset out;
    out.role = role;
    out.dim = dim;

    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != dim + 1) {
            parse_fail(path, line_no, "expected " + std::to_string(dim + 1) + " fields, got " +
                                          std::to_string(fields.size()));
        }
        Example e;
        e.x.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            std::size_t consumed = 0;
            try {
                e.x[j] = std::stod(fields[j], &consumed);
            } catch (const std::exception&) {
                parse_fail(path, line_no, "bad float '" + fields[j] + "'");
            }
            if (consumed != fields[j].size() || !std::isfinite(e.x[j])) {
                parse_fail(path, line_no, "bad float '" + fields[j] + "'");
            }
        }
        std::size_t consumed = 0;
        long label = 0;
        try {
            label = std::stol(fields[dim], &consumed);
        } catch (const std::exception&) {
            parse_fail(path, line_no, "bad label '" + fields[dim] + "'");
        }
        if (consumed != fields[dim].size()) {
            parse_fail(path, line_no, "bad label '" + fields[dim] + "'");
        }
        if (label < -1) {
            parse_fail(path, line_no, "label out of range: " + std::to_string(label));
        }
        e.label = static_cast<int>(label);
        max_label = std::max(max_label, e.label);
        out.examples.push_back(std::move(e));
    }
    out.num_classes = max_label + 1;
    try {
        out.validate();
    } catch (const std::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return out;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (std::size_t j = 0; j < dataset.dim; ++j) out << "x" << j << ",";
    out << "y\n";
    char buf[40];
    for (const Example& e : dataset.examples) {
        for (double v : e.x) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        out << e.label << "\n";
    }
}

std::array<Dataset, 3> split(const Dataset& dataset, const SplitFractions& fractions, Rng& rng) {
    if (!(fractions.train > 0.0 && fractions.val > 0.0 && fractions.test > 0.0)) {
        throw std::invalid_argument("split: fractions must be positive");
    }
    if (std::fabs(fractions.train + fractions.val + fractions.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split: fractions must sum to 1");
    }
    for (const Example& e : dataset.examples) {
        if (e.label < 0) {
            throw std::invalid_argument("split: expects an ID dataset (labels >= 0)");
        }
    }
    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    const std::size_t n_val = static_cast<std::size_t>(fractions.val * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(fractions.test * static_cast<double>(n));
    const std::size_t n_train = n - n_val - n_test;  // remainder to train

    std::array<Dataset, 3> parts;
    const DatasetRole roles[3] = {DatasetRole::id_train, DatasetRole::id_val,
                                  DatasetRole::id_test};
    const std::size_t sizes[3] = {n_train, n_val, n_test};
    std::size_t cursor = 0;
    for (int p = 0; p < 3; ++p) {
        parts[p].role = roles[p];
        parts[p].dim = dataset.dim;
        parts[p].num_classes = dataset.num_classes;
        parts[p].examples.reserve(sizes[p]);
        for (std::size_t i = 0; i < sizes[p]; ++i) {
            parts[p].examples.push_back(dataset.examples[order[cursor++]]);
        }
    }
    return parts;
}

}  // namespace oodlab
