// Embedding costs: a high-pass-residual baseline (symmetric), asymmetric
// adjustment driven by classifier input gradients, additive distortion, and
// the AEC1 binary plane format used for cost/gradient/feature dumps.
#pragma once

#include <fstream>
#include <span>

#include "stegama/grid.hpp"

namespace stegama {

// Per-element gradient of the targeted classifier's loss w.r.t. the input.
using GradientMap = MatD;

struct CostMap {
    MatD rho_plus;   // cost of +1
    MatD rho_minus;  // cost of -1

    // Finite so lambda/entropy arithmetic stays well-defined; the probability
    // of modifying a wet element is numerically zero.
    static constexpr double wet_value = 1e10;

    int rows() const { return rho_plus.rows(); }
    int cols() const { return rho_plus.cols(); }
};

enum class AdjustMode { inverse_sign, same_sign };

// --------------------------------------------------------------------------
// Baseline symmetric costs: rho = 1 / (avg15(avg3(|KB (x) X|)) + eps) with a
// fixed 3x3 high-pass kernel KB and normalized box smoothing, mirror padding
// throughout. Boundary values get a wet cost in the direction that would
// leave [0, 255].
// --------------------------------------------------------------------------

namespace detail {

inline MatD highpass_kb(const ElementGrid& g) {
    static constexpr double kb[3][3] = {{-1, 2, -1}, {2, -4, 2}, {-1, 2, -1}};
    int h = g.height, w = g.width;
    MatD r(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double s = 0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    s += kb[di + 1][dj + 1] * g.elements(reflect(i + di, h), reflect(j + dj, w));
            r(i, j) = s / 4.0;
        }
    return r;
}

}  // namespace detail

inline CostMap baseline_costs(const ElementGrid& g) {
    constexpr double eps = 1e-10;
    MatD resid = detail::highpass_kb(g);
    for (double& v : resid) v = std::abs(v);
    MatD texture = detail::box_filter(detail::box_filter(resid, 1), 7);  // avg3 then avg15

    CostMap c;
    c.rho_plus = MatD(g.height, g.width);
    for (size_t k = 0; k < texture.size(); ++k) c.rho_plus[k] = 1.0 / (texture[k] + eps);
    c.rho_minus = c.rho_plus;

    for (size_t k = 0; k < g.size(); ++k) {
        if (g.elements[k] == 255) c.rho_plus[k] = CostMap::wet_value;
        if (g.elements[k] == 0) c.rho_minus[k] = CostMap::wet_value;
    }
    return c;
}

// --------------------------------------------------------------------------
// Gradient-driven adjustment. For each adjustable element the cheap direction
// becomes the one moving against the gradient (inverse_sign) or with it
// (same_sign); zero gradients and wet entries are left alone.
// --------------------------------------------------------------------------

inline CostMap adjust_costs(const CostMap& cost, const GradientMap& grad, double alpha,
                            AdjustMode mode, std::span<const int> adjustable) {
    if (!(alpha > 1.0)) fail_config("adjust_costs: alpha must be > 1");
    if (!cost.rho_plus.same_dims(grad)) fail_data("adjust_costs: shape mismatch");

    CostMap out = cost;
    // same_sign swaps which gradient sign gets the discount
    double flip = (mode == AdjustMode::inverse_sign) ? 1.0 : -1.0;
    for (int k : adjustable) {
        double s = flip * grad[size_t(k)];
        if (s == 0.0) continue;
        double fp = (s < 0) ? 1.0 / alpha : alpha;
        double fm = (s < 0) ? alpha : 1.0 / alpha;
        if (out.rho_plus[size_t(k)] != CostMap::wet_value) out.rho_plus[size_t(k)] *= fp;
        if (out.rho_minus[size_t(k)] != CostMap::wet_value) out.rho_minus[size_t(k)] *= fm;
    }
    return out;
}

// Total additive distortion of the changes between cover and stego.
inline double distortion(const ElementGrid& cover, const ElementGrid& stego, const CostMap& cost) {
    ModificationMap m = diff(cover, stego);
    double d = 0;
    for (size_t k = 0; k < m.values.size(); ++k) {
        if (m.values[k] == 1) d += cost.rho_plus[k];
        else if (m.values[k] == -1) d += cost.rho_minus[k];
    }
    return d;
}

// --------------------------------------------------------------------------
// AEC1 plane format: "AEC1", u32le height, u32le width, then one or more
// row-major planes of f64le values. Cost maps use two planes (rho+ then
// rho-), gradients one, feature matrices one.
// --------------------------------------------------------------------------

inline std::string encode_planes(std::span<const MatD* const> planes) {
    if (planes.empty()) fail_data("encode_planes: no planes");
    std::string out = "AEC1";
    put_u32le(out, uint32_t(planes[0]->rows()));
    put_u32le(out, uint32_t(planes[0]->cols()));
    for (const MatD* p : planes) {
        if (!p->same_dims(*planes[0])) fail_data("encode_planes: plane shape mismatch");
        for (double v : *p) put_f64le(out, v);
    }
    return out;
}

inline std::vector<MatD> decode_planes(const std::string& bytes) {
    if (bytes.size() < 12 || bytes.compare(0, 4, "AEC1") != 0)
        fail_data("plane file: missing AEC1 magic");
    const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data());
    uint32_t h = get_u32le(p + 4), w = get_u32le(p + 8);
    if (h == 0 || w == 0) fail_data("plane file: zero dimension");
    size_t plane_bytes = size_t(h) * w * 8;
    size_t body = bytes.size() - 12;
    if (plane_bytes == 0 || body == 0 || body % plane_bytes != 0)
        fail_data("plane file: size is not a whole number of planes");
    size_t n = body / plane_bytes;
    std::vector<MatD> planes;
    for (size_t i = 0; i < n; ++i) {
        MatD m{int(h), int(w)};
        const uint8_t* q = p + 12 + i * plane_bytes;
        for (size_t k = 0; k < m.size(); ++k) m[k] = get_f64le(q + k * 8);
        planes.push_back(std::move(m));
    }
    return planes;
}

inline std::string encode_cost(const CostMap& c) {
    const MatD* planes[2] = {&c.rho_plus, &c.rho_minus};
    return encode_planes(planes);
}

inline CostMap decode_cost(const std::string& bytes) {
    std::vector<MatD> planes = decode_planes(bytes);
    if (planes.size() != 2) fail_data("cost file: expected exactly two planes");
    return CostMap{std::move(planes[0]), std::move(planes[1])};
}

// --------------------------------------------------------------------------
// Small file helpers shared by the tools and the harness.
// --------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("cannot open file: " + path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("cannot write file: " + path);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) fail_data("short write: " + path);
}

}  // namespace stegama
