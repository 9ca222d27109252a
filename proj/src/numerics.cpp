#include "oodlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oodlab {

void Matrix::set_row(std::size_t r, const Vector& v) {
    if (v.size() != cols_) {
        throw std::invalid_argument("Matrix::set_row: length " + std::to_string(v.size()) +
                                    " does not match column count " + std::to_string(cols_));
    }
    std::copy(v.begin(), v.end(), row(r));
}

std::uint64_t Rng::mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(mix64(seed) ^ mix64(0x9E3779B97F4A7C15ULL * (stream_id + 1)));
}

std::uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
    if (has_cached_gaussian_) {
        has_cached_gaussian_ = false;
        return cached_gaussian_;
    }
    double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_gaussian_ = r * std::sin(theta);
    has_cached_gaussian_ = true;
    return r * std::cos(theta);
}

std::size_t Rng::next_below(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::next_below: n must be positive");
    }
    std::uint64_t bound = static_cast<std::uint64_t>(n);
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                          std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

Probabilities::Probabilities(Vector values) : p_(std::move(values)) {
    if (p_.empty()) {
        throw std::invalid_argument("Probabilities: empty vector");
    }
    double sum = 0.0;
    for (double v : p_) {
        if (!std::isfinite(v) || v < -1e-12 || v > 1.0 + 1e-12) {
            throw std::invalid_argument("Probabilities: entry outside [0, 1]");
        }
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("Probabilities: sum deviates from 1 by more than 1e-9");
    }
}

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    return all_finite(m.storage());
}

void require_finite(const Vector& v, const std::string& what) {
    if (!all_finite(v)) {
        throw std::invalid_argument(what + ": non-finite value");
    }
}

Probabilities softmax(const Vector& logits) {
    if (logits.empty()) {
        throw std::invalid_argument("softmax: empty input");
    }
    require_finite(logits, "softmax");
    double max_logit = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - max_logit);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return Probabilities(std::move(p));
}

double squared_euclidean(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("squared_euclidean: dimension mismatch (" +
                                    std::to_string(u.size()) + " vs " +
                                    std::to_string(v.size()) + ")");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        double d = u[i] - v[i];
        sum += d * d;
    }
    return sum;
}

double grad_check(const std::function<double(const Vector&)>& loss,
                  const Vector& params,
                  const Vector& analytic_grad,
                  double eps) {
    if (params.size() != analytic_grad.size()) {
        throw std::invalid_argument("grad_check: gradient length mismatch");
    }
    if (eps <= 0.0) {
        throw std::invalid_argument("grad_check: eps must be positive");
    }
    Vector probe = params;
    double max_err = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + eps;
        double up = loss(probe);
        probe[i] = params[i] - eps;
        double down = loss(probe);
        probe[i] = params[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::runtime_error("grad_check: non-finite loss while probing parameter " +
                                     std::to_string(i));
        }
        double central = (up - down) / (2.0 * eps);
        double err = std::fabs(analytic_grad[i] - central) / std::max(1.0, std::fabs(central));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace oodlab
