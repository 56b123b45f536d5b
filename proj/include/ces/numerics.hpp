#pragma once

// Dense vectors and matrices, activations, distances, PCA and the seeded
// random generator shared by every other module. All math is double
// precision; storage formats widen from f32 on load.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ces/errors.hpp"

namespace ces {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.derived().allFinite();
}

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Cosine distance together with a flag raised when either input had zero norm.
struct CosineResult {
    double value = 0.0;
    bool degenerate = false;
};

/// 1 - cos(u, v), clamped to [0, 2]. A zero-norm input yields 1.0 with the
/// degenerate flag set so that boundary signals stay finite.
template <typename A, typename B>
CosineResult cosine_distance_checked(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
    if (u.size() == 0 || v.size() == 0) {
        throw ShapeError("empty vector");
    }
    if (u.size() != v.size()) {
        throw ShapeError("cosine_distance: length mismatch");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        return {1.0, true};
    }
    // nu * nv and the dot product are both symmetric in (u, v), so the result
    // is bit-identical when the arguments are swapped.
    const double cosine = u.dot(v) / (nu * nv);
    return {std::clamp(1.0 - cosine, 0.0, 2.0), false};
}

template <typename A, typename B>
double cosine_distance(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
    return cosine_distance_checked(u, v).value;
}

/// Mean squared difference over elements.
template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    if (a.size() != b.size()) {
        throw ShapeError("mse: length mismatch");
    }
    if (a.size() == 0) {
        throw ShapeError("empty vector");
    }
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

struct PearsonResult {
    double value = 0.0;
    bool degenerate = false;
};

/// Pearson correlation across the dimensions of two vectors. A constant input
/// has no linear relation to anything and returns 0 with the flag set.
template <typename A, typename B>
PearsonResult pearson_correlation_checked(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
    if (u.size() != v.size()) {
        throw ShapeError("pearson_correlation: length mismatch");
    }
    if (u.size() < 2) {
        throw ShapeError("pearson_correlation: need at least 2 elements");
    }
    const Vector du = (u.array() - u.mean()).matrix();
    const Vector dv = (v.array() - v.mean()).matrix();
    const double su = du.squaredNorm();
    const double sv = dv.squaredNorm();
    if (su == 0.0 || sv == 0.0) {
        return {0.0, true};
    }
    return {std::clamp(du.dot(dv) / std::sqrt(su * sv), -1.0, 1.0), false};
}

template <typename A, typename B>
double pearson_correlation(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
    return pearson_correlation_checked(u, v).value;
}

namespace detail {

// Sums f(0..n-1) pairing the outermost terms first: (f(0)+f(n-1)) +
// (f(1)+f(n-2)) + ... The pair sums are commutative, so reversing the
// order of the terms gives a bit-identical result.
template <typename Result, typename F>
Result mirrored_sum(std::size_t n, Result zero, F&& f) {
    Result total = zero;
    std::size_t lo = 0;
    std::size_t hi = n;
    while (hi - lo >= 2) {
        --hi;
        Result pair = f(lo);
        pair += f(hi);
        total += pair;
        ++lo;
    }
    if (hi > lo) {
        total += f(lo);
    }
    return total;
}

}  // namespace detail

/// Mean of the columns, summed in mirrored order (see detail::mirrored_sum).
template <typename Derived>
Vector column_mean(const Eigen::MatrixBase<Derived>& columns) {
    const auto n = static_cast<std::size_t>(columns.cols());
    if (n == 0) {
        throw ShapeError("column_mean: no columns");
    }
    Vector sum = detail::mirrored_sum(n, Vector(Vector::Zero(columns.rows())),
                                      [&](std::size_t j) { return Vector(columns.col(static_cast<Eigen::Index>(j))); });
    return sum / static_cast<double>(n);
}

struct PcaOptions {
    int max_iterations = 1000;
    double tolerance = 1e-10;
};

/// Dominant direction of a set of column vectors: the leading eigenvector of
/// the (uncentered) second-moment matrix, found by power iteration. The sign
/// is fixed so that the result points along the column mean, or so that its
/// first nonzero entry is positive when the mean vanishes.
template <typename Derived>
Vector pca_first_component(const Eigen::MatrixBase<Derived>& columns, PcaOptions opts = {}) {
    const Eigen::Index dim = columns.rows();
    const auto n = static_cast<std::size_t>(columns.cols());
    if (dim == 0 || n == 0) {
        throw ShapeError("pca_first_component: empty input");
    }
    if (!columns.allFinite()) {
        throw NumericError("pca_first_component: non-finite input");
    }
    if (columns.isZero(0.0)) {
        throw NumericError("degenerate window");
    }
    // moment * v == sum_j c_j (c_j . v), evaluated without forming the D x D matrix.
    const auto apply_moment = [&](const Vector& v) {
        return detail::mirrored_sum(n, Vector(Vector::Zero(dim)), [&](std::size_t j) {
            const auto c = columns.col(static_cast<Eigen::Index>(j));
            return Vector(c * c.dot(v));
        });
    };
    const Vector mean = column_mean(columns);

    Vector v = mean.norm() > 0.0 ? Vector(mean.normalized()) : Vector(Vector::Ones(dim).normalized());
    // A fixed tilt keeps the start off any eigenvector orthogonal to the mean.
    for (Eigen::Index k = 0; k < dim; ++k) {
        v[k] += 1e-3 / static_cast<double>(k + 1);
    }
    v.normalize();

    for (int it = 0; it < opts.max_iterations; ++it) {
        Vector next = apply_moment(v);
        const double norm = next.norm();
        if (norm == 0.0) {
            break;
        }
        next /= norm;
        if (next.dot(v) < 0.0) {
            next = -next;
        }
        const double change = (next - v).norm();
        v = std::move(next);
        if (change < opts.tolerance) {
            break;
        }
    }

    const double along_mean = v.dot(mean);
    if (along_mean < 0.0) {
        v = -v;
    } else if (along_mean == 0.0) {
        for (Eigen::Index k = 0; k < dim; ++k) {
            if (v[k] != 0.0) {
                if (v[k] < 0.0) {
                    v = -v;
                }
                break;
            }
        }
    }
    return v;
}

/// Seeded generator with platform-independent transforms. The engine is
/// std::mt19937_64, whose output sequence is fixed by the standard; the
/// uniform/normal/shuffle mappings are implemented here because the standard
/// distributions are not.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform integer in [0, n), unbiased.
    std::size_t index(std::size_t n) {
        if (n == 0) {
            throw ConfigError("Rng::index: empty range");
        }
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x = engine_();
        while (x >= limit) {
            x = engine_();
        }
        return static_cast<std::size_t>(x % bound);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    Vector normal_vector(Eigen::Index n, double stddev = 1.0) {
        Vector v(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            v[k] = stddev * normal();
        }
        return v;
    }

    Vector unit_vector(Eigen::Index n) {
        Vector v = normal_vector(n);
        while (v.norm() == 0.0) {
            v = normal_vector(n);
        }
        return v.normalized();
    }

    std::string state() const {
        std::ostringstream out;
        out << engine_ << ' ' << has_spare_ << ' ';
        out.precision(17);
        out << std::hexfloat << spare_;
        return out.str();
    }

    void set_state(const std::string& text) {
        std::istringstream in(text);
        in >> engine_ >> has_spare_;
        std::string spare;
        in >> spare;
        if (!in && !in.eof()) {
            throw FormatError("Rng::set_state: malformed state");
        }
        spare_ = std::strtod(spare.c_str(), nullptr);
    }

    friend bool operator==(const Rng& a, const Rng& b) {
        return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ && (!a.has_spare_ || a.spare_ == b.spare_);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// SplitMix64 finalizer; derives independent child seeds from a parent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace ces
