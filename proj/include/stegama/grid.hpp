// Cover/stego image representation, synthetic cover generation, and
// bit-exact binary PGM (P5) IO.
#pragma once

#include <algorithm>
#include <string>

#include "stegama/core.hpp"

namespace stegama {

// 8-bit image elements plus a mask of elements allowed to carry payload.
struct ElementGrid {
    int height = 0;
    int width = 0;
    MatU8 elements;
    MatU8 usable_mask;  // 1 = may carry payload

    ElementGrid() = default;
    ElementGrid(int h, int w, uint8_t fill = 0)
        : height(h), width(w), elements(h, w, fill), usable_mask(h, w, 1) {}

    size_t size() const { return elements.size(); }
    int usable_count() const {
        int n = 0;
        for (uint8_t u : usable_mask) n += u != 0;
        return n;
    }
    bool operator==(const ElementGrid& o) const {
        return elements == o.elements && usable_mask == o.usable_mask;
    }
};

// Per-element difference stego - cover, each entry in {-1, 0, +1}.
struct ModificationMap {
    Mat<int8_t> values;

    int change_count() const {
        int n = 0;
        for (int8_t v : values) n += v != 0;
        return n;
    }
};

// --------------------------------------------------------------------------
// PGM (binary P5, maxval 255)
// --------------------------------------------------------------------------

namespace detail {

// Whitespace/comment skipping per the netpbm header grammar.
inline void pgm_skip_space(const std::string& b, size_t& pos) {
    while (pos < b.size()) {
        char c = b[pos];
        if (c == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
            ++pos;
        } else {
            break;
        }
    }
}

inline long pgm_read_uint(const std::string& b, size_t& pos, const char* what) {
    pgm_skip_space(b, pos);
    if (pos >= b.size() || b[pos] < '0' || b[pos] > '9')
        fail_data(std::string("pgm: malformed header, expected ") + what);
    long v = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        v = v * 10 + (b[pos] - '0');
        if (v > 1'000'000'000L) fail_data(std::string("pgm: implausible ") + what);
        ++pos;
    }
    return v;
}

}  // namespace detail

inline ElementGrid load_pgm(const std::string& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        if (bytes.size() >= 2 && bytes[0] == 'P')
            fail_data("pgm: unsupported variant (only binary P5 is accepted)");
        fail_data("pgm: malformed header, missing P5 magic");
    }
    size_t pos = 2;
    long w = detail::pgm_read_uint(bytes, pos, "width");
    long h = detail::pgm_read_uint(bytes, pos, "height");
    long maxval = detail::pgm_read_uint(bytes, pos, "maxval");
    if (w < 1 || h < 1) fail_data("pgm: malformed header, non-positive dimensions");
    if (maxval != 255) fail_data("pgm: unsupported maxval (must be 255)");
    if (pos >= bytes.size()) fail_data("pgm: truncated pixel payload");
    char sep = bytes[pos];
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
        fail_data("pgm: malformed header, expected whitespace before pixels");
    ++pos;

    size_t need = size_t(w) * size_t(h);
    if (bytes.size() - pos < need) fail_data("pgm: truncated pixel payload");
    if (bytes.size() - pos > need) fail_data("pgm: trailing bytes after pixel payload");

    ElementGrid g{int(h), int(w)};
    std::memcpy(g.elements.data(), bytes.data() + pos, need);
    return g;
}

// Canonical encoding: "P5\n<w> <h>\n255\n" + row-major bytes.
inline std::string save_pgm(const ElementGrid& g) {
    std::string out = "P5\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(g.elements.data()), g.size());
    return out;
}

// --------------------------------------------------------------------------
// Synthetic covers: white noise smoothed by a normalized box filter, then
// affinely rescaled to [0,255]. A deterministic stand-in for an image corpus.
// --------------------------------------------------------------------------

namespace detail {

// symmetric (edge-repeating) reflection of an out-of-range index
inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

inline MatD box_filter(const MatD& x, int radius) {
    if (radius == 0) return x;
    int h = x.rows(), w = x.cols();
    double norm = 1.0 / (2 * radius + 1);
    MatD tmp(h, w), out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0;
            for (int d = -radius; d <= radius; ++d) s += x(i, reflect(j + d, w));
            tmp(i, j) = s * norm;
        }
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0;
            for (int d = -radius; d <= radius; ++d) s += tmp(reflect(i + d, h), j);
            out(i, j) = s * norm;
        }
    return out;
}

}  // namespace detail

inline ElementGrid synth_cover(int height, int width, uint64_t seed, double smoothness) {
    if (height < 16 || width < 16) fail_config("synth_cover: dimensions must be at least 16");
    if (smoothness < 0) fail_config("synth_cover: smoothness must be non-negative");

    Rng rng(seed);
    MatD noise(height, width);
    for (double& v : noise) v = rng.uniform01();

    int radius = int(std::lround(smoothness));
    MatD smooth = detail::box_filter(noise, radius);

    double lo = smooth[0], hi = smooth[0];
    for (double v : smooth) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    ElementGrid g(height, width);
    if (hi == lo) {
        std::fill(g.elements.begin(), g.elements.end(), uint8_t(128));
        return g;
    }
    double scale = 255.0 / (hi - lo);
    for (size_t k = 0; k < smooth.size(); ++k) {
        // round half away from zero, stated so digests are pinnable
        g.elements[k] = uint8_t(std::round((smooth[k] - lo) * scale));
    }
    return g;
}

// --------------------------------------------------------------------------
// Ternary difference map
// --------------------------------------------------------------------------

inline ModificationMap diff(const ElementGrid& cover, const ElementGrid& stego) {
    if (!cover.elements.same_dims(stego.elements)) fail_data("diff: dimension mismatch");
    ModificationMap m;
    m.values = Mat<int8_t>(cover.height, cover.width);
    for (size_t k = 0; k < cover.size(); ++k) {
        int d = int(stego.elements[k]) - int(cover.elements[k]);
        if (d < -1 || d > 1) fail_data("diff: non-ternary change (|difference| > 1)");
        m.values[k] = int8_t(d);
    }
    return m;
}

}  // namespace stegama
