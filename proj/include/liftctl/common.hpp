#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace liftctl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Closed real interval, possibly unbounded on either side.
struct Interval {
    double lo = -kInf;
    double hi = kInf;

    bool contains(double v) const { return v >= lo && v <= hi; }
    bool is_finite() const { return std::isfinite(lo) && std::isfinite(hi); }
    double width() const { return hi - lo; }
};

// Axis-aligned box in R^n.
struct Box {
    std::vector<Interval> axes;

    static Box unbounded(int n) { return Box{std::vector<Interval>(static_cast<size_t>(n))}; }
    static Box cube(int n, double lo, double hi) {
        return Box{std::vector<Interval>(static_cast<size_t>(n), Interval{lo, hi})};
    }

    int dim() const { return static_cast<int>(axes.size()); }

    bool contains(const Vec& x) const {
        if (x.size() != dim()) return false;
        for (int i = 0; i < dim(); ++i)
            if (!axes[static_cast<size_t>(i)].contains(x(i))) return false;
        return true;
    }

    // Index of the first coordinate of x outside the box, or -1 if inside.
    int first_violation(const Vec& x) const {
        for (int i = 0; i < dim() && i < x.size(); ++i)
            if (!axes[static_cast<size_t>(i)].contains(x(i))) return i;
        return -1;
    }

    bool contains_origin() const {
        for (const auto& iv : axes)
            if (!iv.contains(0.0)) return false;
        return true;
    }
};

struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric inversion did not reach the residual tolerance.
struct InversionError : std::runtime_error {
    double residual;
    InversionError(const std::string& what, double res)
        : std::runtime_error(what), residual(res) {}
};

// A plant trajectory left the safety box during data collection.
struct DivergenceError : std::runtime_error {
    int experiment;
    DivergenceError(const std::string& what, int exp_index)
        : std::runtime_error(what), experiment(exp_index) {}
};

struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64: per-stream seed derivation from a master seed and a stream index.
inline std::uint64_t splitmix64(std::uint64_t state) {
    std::uint64_t z = state + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 1));
}

// Portable uniform double in [lo, hi] from a 64-bit word (53-bit mantissa).
inline double uniform_from_bits(std::uint64_t bits, double lo, double hi) {
    const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
}

// FNV-1a, used to stamp output files with a config fingerprint.
inline std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fnv_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace liftctl
