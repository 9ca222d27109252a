#ifndef OODLAB_DATASET_HPP
#define OODLAB_DATASET_HPP

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "oodlab/numerics.hpp"

namespace oodlab {

/// Raised by CSV readers; the message names the offending file and line.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DatasetRole { id_train, id_val, id_test, near_ood, far_ood };

const char* role_name(DatasetRole role);
DatasetRole role_from_name(const std::string& name);

/// Label carried by every OOD example.
inline constexpr int kOodLabel = -1;

struct Example {
    Vector x;
    int label = kOodLabel;
};

struct Dataset {
    std::vector<Example> examples;
    DatasetRole role = DatasetRole::id_train;
    std::size_t dim = 0;
    int num_classes = 0;

    std::size_t size() const { return examples.size(); }

    /// Checks the role/label/dimension invariants; throws on violation.
    void validate() const;

    std::vector<int> labels() const;
    /// Examples stacked into an n x dim matrix, in order.
    Matrix features() const;
};

/// Isotropic Gaussian mixture: one mean per ID class, shared stddev.
struct MixtureSpec {
    Matrix means;  // C x d
    double sigma = 0.3;
    std::size_t per_class = 250;

    std::size_t classes() const { return means.rows(); }
    std::size_t dim() const { return means.cols(); }
    void validate() const;
};

/// C means evenly spaced on a circle of the given radius in the first two
/// coordinates (remaining coordinates zero). Requires dim >= 2.
Matrix circle_means(std::size_t classes, std::size_t dim, double radius);

/// per_class draws from N(mean_k, sigma^2 I) for every class k, in class
/// order. Role id_train; callers split as needed.
Dataset gen_id(const MixtureSpec& spec, Rng& rng);

/// m draws from Gaussians (same sigma) centered at the midpoints of adjacent
/// class-mean pairs. Adjacency is cyclic in mean order: (k, k+1 mod C),
/// deduplicated, so C=2 yields a single midpoint. Samples cycle through the
/// midpoints round-robin. All labels are the OOD sentinel.
Dataset gen_near_ood(const MixtureSpec& spec, std::size_t m, Rng& rng);

/// m points from a spherical shell far outside the mixture: direction
/// uniform on the unit sphere, radius uniform in [R, 1.25 R] with
/// R = 4 * max mean norm + 4 * sigma. All labels are the OOD sentinel.
Dataset gen_far_ood(const MixtureSpec& spec, std::size_t m, Rng& rng);

/// CSV with header x0,...,x{d-1},y; features are decimal floats, y is an
/// integer >= -1 (-1 marks OOD). LF line endings. Errors name the line.
Dataset load_csv(const std::filesystem::path& path, DatasetRole role);

void save_csv(const Dataset& dataset, const std::filesystem::path& path);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

/// Seeded permutation partition into (train, val, test). Sizes are
/// floor(fraction * n) for val and test; the remainder goes to train.
/// Requires an ID dataset (all labels >= 0); fractions positive, sum 1.
std::array<Dataset, 3> split(const Dataset& dataset, const SplitFractions& fractions, Rng& rng);

}  // namespace oodlab

#endif
