#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace topograd {

class Tape;

/// Dense n-dimensional array of doubles, row-major.
///
/// A Tensor is a plain value; copying copies the data. When produced by a
/// differentiable operation it additionally carries a reference to the tape
/// node that created it (tape + node). Constants have tape == nullptr and
/// never receive gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;

    Tensor(std::vector<int> shp, std::vector<double> d)
        : shape(std::move(shp)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<long>(data.size()))
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                        " does not match data length " +
                                        std::to_string(data.size()));
    }

    static long numel_of(const std::vector<int>& shp) {
        long n = 1;
        for (int s : shp) {
            if (s < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= s;
        }
        return n;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros(std::vector<int> shp) {
        long n = numel_of(shp);
        return Tensor(std::move(shp), std::vector<double>(static_cast<size_t>(n), 0.0));
    }

    static Tensor full(std::vector<int> shp, double v) {
        long n = numel_of(shp);
        return Tensor(std::move(shp), std::vector<double>(static_cast<size_t>(n), v));
    }

    long numel() const { return static_cast<long>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    bool tracked() const { return tape != nullptr && node >= 0; }

    /// Copy of the value with no tape reference.
    Tensor detached() const {
        Tensor t;
        t.shape = shape;
        t.data = data;
        return t;
    }

    double value() const {
        if (numel() != 1)
            throw std::invalid_argument("Tensor::value: not a scalar, shape " + shape_str(shape));
        return data[0];
    }

    double& at(int i, int j) {
        return data[static_cast<size_t>(i) * shape[1] + j];
    }
    double at(int i, int j) const {
        return data[static_cast<size_t>(i) * shape[1] + j];
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ")";
        return os.str();
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a.shape) + " vs " +
                                    Tensor::shape_str(b.shape));
}

inline double mean_of(const Tensor& t) {
    if (t.numel() == 0) throw std::invalid_argument("mean_of: empty tensor");
    double s = std::accumulate(t.data.begin(), t.data.end(), 0.0);
    return s / static_cast<double>(t.numel());
}

inline bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

/// Deterministic pseudo-random stream used everywhere randomness is needed.
/// splitmix64 for integers, Box-Muller on top for normals; identical output
/// on every platform for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Integer in [0, n).
    long index(long n) { return static_cast<long>(next_u64() % static_cast<std::uint64_t>(n)); }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace topograd
