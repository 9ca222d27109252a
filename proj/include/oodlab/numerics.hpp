#ifndef OODLAB_NUMERICS_HPP
#define OODLAB_NUMERICS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace oodlab {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Dimensions are fixed at construction.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    Vector row_vector(std::size_t r) const {
        return Vector(row(r), row(r) + cols_);
    }
    void set_row(std::size_t r, const Vector& v);

    const Vector& storage() const { return data_; }
    Vector& storage() { return data_; }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

// ---------------------------------------------------------------------------
// Deterministic PRNG.
//
// splitmix64: the 64-bit state advances by a fixed odd constant and each
// output is a finalizing hash of the state, so draw i is a pure function of
// (seed, i). The integer stream is bit-identical on every platform. Gaussian
// draws go through Box-Muller (two uniforms per pair, second value cached),
// so their exactness additionally depends on the platform's log/cos/sin.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// Sub-seeding: decorrelates streams for distinct purposes (data
    /// generation, weight init, shuffling, mining) from one base seed.
    /// stream(seed, k) = Rng(mix64(seed) ^ mix64(golden * (k + 1))).
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

    /// splitmix64 finalizer, exposed for documentation and tests.
    static std::uint64_t mix64(std::uint64_t x);

    std::uint64_t next_u64();

    /// Uniform on [0, 1): top 53 bits of next_u64.
    double next_double();

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    double next_gaussian();

    /// Uniform on [0, n) without modulo bias (rejection sampling).
    std::size_t next_below(std::size_t n);

    /// Fisher-Yates shuffle driven by next_below.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double cached_gaussian_ = 0.0;
    bool has_cached_gaussian_ = false;
};

/// Length-C probability vector: entries in [0, 1], sum within 1e-9 of 1.
class Probabilities {
public:
    explicit Probabilities(Vector values);

    const Vector& values() const { return p_; }
    double operator[](std::size_t i) const { return p_[i]; }
    std::size_t size() const { return p_.size(); }

private:
    Vector p_;
};

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

/// Throws std::invalid_argument naming `what` if v contains NaN/Inf.
void require_finite(const Vector& v, const std::string& what);

/// Numerically stable softmax (max subtraction), invariant to adding a
/// constant to all logits. Throws on empty or non-finite input.
Probabilities softmax(const Vector& logits);

/// Sum of squared coordinate differences. Throws on dimension mismatch.
double squared_euclidean(const Vector& u, const Vector& v);

/// Central-difference gradient check. Returns the maximum over parameters of
/// |analytic - central_difference| / max(1, |central_difference|).
/// Throws std::runtime_error if the loss is non-finite during probing.
double grad_check(const std::function<double(const Vector&)>& loss,
                  const Vector& params,
                  const Vector& analytic_grad,
                  double eps = 1e-5);

}  // namespace oodlab

#endif
