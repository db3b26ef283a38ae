// Core utilities shared by every module: dense row-major matrices,
// deterministic RNG helpers, error kinds mapped to process exit codes,
// and little-endian binary IO primitives.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stegama {

// ---------------------------------------------------------------------------
// Errors. Kinds mirror the CLI exit codes: config=2, data=3, infeasible=4.
// ---------------------------------------------------------------------------

enum class Errc { config = 2, data = 3, infeasible = 4 };

class Error : public std::runtime_error {
public:
    Error(Errc kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Errc kind() const noexcept { return kind_; }

private:
    Errc kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) { throw Error(Errc::config, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(Errc::data, msg); }
[[noreturn]] inline void fail_infeasible(const std::string& msg) { throw Error(Errc::infeasible, msg); }

// ---------------------------------------------------------------------------
// Mat: dense row-major matrix.
// ---------------------------------------------------------------------------

template <typename T>
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols), v_(size_t(rows) * cols, fill) {
        if (rows < 0 || cols < 0) fail_data("Mat: negative dimensions");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return v_.size(); }

    T& operator()(int i, int j) { return v_[size_t(i) * cols_ + j]; }
    const T& operator()(int i, int j) const { return v_[size_t(i) * cols_ + j]; }
    T& operator[](size_t k) { return v_[k]; }
    const T& operator[](size_t k) const { return v_[k]; }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    auto begin() { return v_.begin(); }
    auto end() { return v_.end(); }
    auto begin() const { return v_.begin(); }
    auto end() const { return v_.end(); }

    template <typename U>
    bool same_dims(const Mat<U>& o) const { return rows_ == o.rows() && cols_ == o.cols(); }
    bool operator==(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_; }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<T> v_;
};

using MatD = Mat<double>;
using MatU8 = Mat<uint8_t>;

// ---------------------------------------------------------------------------
// Deterministic randomness. mt19937_64 is bit-exact across platforms; all
// value mappings below are spelled out so streams never depend on the
// standard library's unspecified distributions.
// ---------------------------------------------------------------------------

inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for a named substream, e.g. per image, per beta step, per learner.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) { return mix64(mix64(seed) + salt); }

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1) with 53 random bits
    double uniform01() { return double(eng_() >> 11) * 0x1.0p-53; }

    // unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = eng_(); } while (x >= lim);
        return x % n;
    }

    // Box-Muller; one value per call keeps the stream layout obvious
    double normal() {
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Byte IO and digests.
// ---------------------------------------------------------------------------

inline void put_u32le(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f64le(std::string& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

inline double get_f64le(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t digest(const MatD& m, uint64_t h = 1469598103934665603ULL) {
    return fnv1a64(m.data(), m.size() * sizeof(double), h);
}

inline uint64_t digest(const MatU8& m, uint64_t h = 1469598103934665603ULL) {
    return fnv1a64(m.data(), m.size(), h);
}

}  // namespace stegama
