// The targeted steganalyzer: a small CNN with a fixed 5x5 predictor-residual
// (KV) high-pass front end, three conv blocks (abs activation on the first,
// tanh on the rest, 2x2 average pooling), global average pooling and a single
// logistic unit. Forward, cross-entropy loss, exact input gradients and
// momentum-SGD training are all implemented by hand so the gradient path is
// fully under our control.
#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <thread>

#include "stegama/cost.hpp"

namespace stegama::cnn {

constexpr int kMaps1 = 8, kMaps2 = 16, kMaps3 = 32;

// KV kernel, applied with zero padding; non-trainable.
constexpr double kKv[5][5] = {
    {-1, 2, -2, 2, -1}, {2, -6, 8, -6, 2}, {-2, 8, -12, 8, -2}, {2, -6, 8, -6, 2}, {-1, 2, -2, 2, -1},
};
constexpr double kKvScale = 1.0 / 12.0;

struct Tensor3 {
    int maps = 0, h = 0, w = 0;
    std::vector<double> v;

    void reshape(int m, int hh, int ww) {
        maps = m;
        h = hh;
        w = ww;
        v.assign(size_t(m) * hh * ww, 0.0);
    }
    double* map(int m) { return v.data() + size_t(m) * h * w; }
    const double* map(int m) const { return v.data() + size_t(m) * h * w; }
    size_t plane() const { return size_t(h) * w; }
};

struct ConvLayer {
    int in_maps = 0, out_maps = 0;
    std::vector<double> w;  // [out][in][3][3]
    std::vector<double> b;  // [out]

    void init(int in, int out) {
        in_maps = in;
        out_maps = out;
        w.assign(size_t(in) * out * 9, 0.0);
        b.assign(size_t(out), 0.0);
    }
    double* kernel(int o, int m) { return w.data() + (size_t(o) * in_maps + m) * 9; }
    const double* kernel(int o, int m) const { return w.data() + (size_t(o) * in_maps + m) * 9; }
};

struct Model {
    int input_h = 0, input_w = 0;
    ConvLayer c1, c2, c3;
    std::vector<double> fc_w;
    double fc_b = 0.0;
    uint64_t seed = 0;
    int64_t iterations = 0;
};

inline Model make_model(int input_h, int input_w, uint64_t seed) {
    if (input_h < 8 || input_w < 8 || input_h % 8 || input_w % 8)
        fail_config("cnn: input dimensions must be multiples of 8 (three pooling stages)");
    Model m;
    m.input_h = input_h;
    m.input_w = input_w;
    m.seed = seed;
    m.c1.init(1, kMaps1);
    m.c2.init(kMaps1, kMaps2);
    m.c3.init(kMaps2, kMaps3);
    m.fc_w.assign(kMaps3, 0.0);

    Rng rng(seed);
    auto xavier = [&](std::vector<double>& w, int fan_in, int fan_out) {
        double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : w) v = a * (2 * rng.uniform01() - 1);
    };
    xavier(m.c1.w, 9, kMaps1 * 9);
    xavier(m.c2.w, kMaps1 * 9, kMaps2 * 9);
    xavier(m.c3.w, kMaps2 * 9, kMaps3 * 9);
    xavier(m.fc_w, kMaps3, 1);
    return m;
}

// --------------------------------------------------------------------------
// Convolution plumbing. Everything runs on zero-padded copies so the inner
// loops are branch-free.
// --------------------------------------------------------------------------

namespace detail {

struct Padded {
    int h = 0, w = 0, pad = 0;
    std::vector<double> v;  // (h + 2 pad) x (w + 2 pad) per map

    void load(const Tensor3& t, int p) {
        h = t.h;
        w = t.w;
        pad = p;
        size_t ph = size_t(h + 2 * p), pw = size_t(w + 2 * p);
        v.assign(size_t(t.maps) * ph * pw, 0.0);
        for (int m = 0; m < t.maps; ++m) {
            const double* src = t.map(m);
            double* dst = v.data() + size_t(m) * ph * pw;
            for (int i = 0; i < h; ++i)
                std::memcpy(dst + (size_t(i) + p) * pw + p, src + size_t(i) * w, size_t(w) * 8);
        }
    }
    const double* row(int m, int i) const {
        size_t ph = size_t(h + 2 * pad), pw = size_t(w + 2 * pad);
        (void)ph;
        return v.data() + size_t(m) * (size_t(h + 2 * pad) * pw) + size_t(i) * pw;
    }
};

inline void conv3_forward(const Padded& in, const ConvLayer& L, Tensor3& out) {
    out.reshape(L.out_maps, in.h, in.w);
    int h = in.h, w = in.w;
    for (int o = 0; o < L.out_maps; ++o) {
        double* op = out.map(o);
        std::fill(op, op + out.plane(), L.b[size_t(o)]);
        for (int m = 0; m < L.in_maps; ++m) {
            const double* K = L.kernel(o, m);
            for (int i = 0; i < h; ++i) {
                const double* r0 = in.row(m, i);
                const double* r1 = in.row(m, i + 1);
                const double* r2 = in.row(m, i + 2);
                double* orow = op + size_t(i) * w;
                for (int j = 0; j < w; ++j) {
                    orow[j] += K[0] * r0[j] + K[1] * r0[j + 1] + K[2] * r0[j + 2] +
                               K[3] * r1[j] + K[4] * r1[j + 1] + K[5] * r1[j + 2] +
                               K[6] * r2[j] + K[7] * r2[j + 1] + K[8] * r2[j + 2];
                }
            }
        }
    }
}

// din = dout correlated with the 180-degree flipped kernels (gather form);
// optionally accumulates weight/bias gradients against the forward input.
inline void conv3_backward(const Padded& in, const ConvLayer& L, const Tensor3& dout,
                           const Padded& dout_padded, Tensor3& din, ConvLayer* dL) {
    int h = dout.h, w = dout.w;
    din.reshape(L.in_maps, h, w);
    for (int m = 0; m < L.in_maps; ++m) {
        double* dp = din.map(m);
        for (int o = 0; o < L.out_maps; ++o) {
            const double* K = L.kernel(o, m);
            for (int i = 0; i < h; ++i) {
                const double* r0 = dout_padded.row(o, i);
                const double* r1 = dout_padded.row(o, i + 1);
                const double* r2 = dout_padded.row(o, i + 2);
                double* drow = dp + size_t(i) * w;
                for (int j = 0; j < w; ++j) {
                    drow[j] += K[8] * r0[j] + K[7] * r0[j + 1] + K[6] * r0[j + 2] +
                               K[5] * r1[j] + K[4] * r1[j + 1] + K[3] * r1[j + 2] +
                               K[2] * r2[j] + K[1] * r2[j + 1] + K[0] * r2[j + 2];
                }
            }
        }
    }
    if (!dL) return;
    for (int o = 0; o < L.out_maps; ++o) {
        const double* dp = dout.map(o);
        double bsum = 0;
        for (size_t k = 0; k < dout.plane(); ++k) bsum += dp[k];
        dL->b[size_t(o)] += bsum;
        for (int m = 0; m < L.in_maps; ++m) {
            double* K = dL->kernel(o, m);
            for (int di = 0; di < 3; ++di)
                for (int dj = 0; dj < 3; ++dj) {
                    double s = 0;
                    for (int i = 0; i < h; ++i) {
                        const double* irow = in.row(m, i + di) + dj;
                        const double* drow = dp + size_t(i) * w;
                        for (int j = 0; j < w; ++j) s += irow[j] * drow[j];
                    }
                    K[di * 3 + dj] += s;
                }
        }
    }
}

inline void pool2_forward(const Tensor3& in, Tensor3& out) {
    out.reshape(in.maps, in.h / 2, in.w / 2);
    for (int m = 0; m < in.maps; ++m) {
        const double* ip = in.map(m);
        double* op = out.map(m);
        for (int i = 0; i < out.h; ++i)
            for (int j = 0; j < out.w; ++j) {
                const double* r0 = ip + size_t(2 * i) * in.w + 2 * j;
                const double* r1 = r0 + in.w;
                op[size_t(i) * out.w + j] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
            }
    }
}

inline void pool2_backward(const Tensor3& dout, int in_h, int in_w, Tensor3& din) {
    din.reshape(dout.maps, in_h, in_w);
    for (int m = 0; m < dout.maps; ++m) {
        const double* dp = dout.map(m);
        double* ip = din.map(m);
        for (int i = 0; i < dout.h; ++i)
            for (int j = 0; j < dout.w; ++j) {
                double g = 0.25 * dp[size_t(i) * dout.w + j];
                double* r0 = ip + size_t(2 * i) * in_w + 2 * j;
                double* r1 = r0 + in_w;
                r0[0] = r0[1] = r1[0] = r1[1] = g;
            }
    }
}

inline void kv_forward(const Padded& x, Tensor3& out) {
    out.reshape(1, x.h, x.w);
    double* op = out.map(0);
    for (int i = 0; i < x.h; ++i) {
        double* orow = op + size_t(i) * x.w;
        for (int j = 0; j < x.w; ++j) {
            double s = 0;
            for (int di = 0; di < 5; ++di) {
                const double* r = x.row(0, i + di) + j;
                s += kKv[di][0] * r[0] + kKv[di][1] * r[1] + kKv[di][2] * r[2] +
                     kKv[di][3] * r[3] + kKv[di][4] * r[4];
            }
            orow[j] = s * kKvScale;
        }
    }
}

inline void kv_backward(const Padded& dresid, Tensor3& dx) {
    dx.reshape(1, dresid.h, dresid.w);
    double* op = dx.map(0);
    for (int i = 0; i < dresid.h; ++i) {
        double* orow = op + size_t(i) * dresid.w;
        for (int j = 0; j < dresid.w; ++j) {
            double s = 0;
            for (int di = 0; di < 5; ++di) {
                const double* r = dresid.row(0, i + di) + j;
                // flipped kernel; kKv is point-symmetric so this equals kKv
                s += kKv[4 - di][4] * r[0] + kKv[4 - di][3] * r[1] + kKv[4 - di][2] * r[2] +
                     kKv[4 - di][1] * r[3] + kKv[4 - di][0] * r[4];
            }
            orow[j] = s * kKvScale;
        }
    }
}

// Forward activations, reusable across calls to avoid re-allocation.
struct Scratch {
    Tensor3 x0, resid, z1, a1, p1, a2, p2, a3, p3;
    Padded pad_x, pad_r, pad_p1, pad_p2;
    std::array<double, kMaps3> gap{};
    double logit = 0, F = 0.5;

    // backward temporaries
    Tensor3 d3, d2, d1, dp, dtmp;
    Padded pad_d;
};

inline double forward_impl(const Model& M, const MatD& pixels, Scratch& s) {
    if (pixels.rows() != M.input_h || pixels.cols() != M.input_w)
        fail_data("cnn forward: input dimensions do not match the model");
    s.x0.reshape(1, M.input_h, M.input_w);
    for (size_t k = 0; k < pixels.size(); ++k) s.x0.v[k] = pixels[k] / 255.0 - 0.5;

    s.pad_x.load(s.x0, 2);
    kv_forward(s.pad_x, s.resid);

    s.pad_r.load(s.resid, 1);
    conv3_forward(s.pad_r, M.c1, s.z1);
    s.a1 = s.z1;
    for (double& v : s.a1.v) v = std::abs(v);
    pool2_forward(s.a1, s.p1);

    s.pad_p1.load(s.p1, 1);
    conv3_forward(s.pad_p1, M.c2, s.a2);
    for (double& v : s.a2.v) v = std::tanh(v);
    pool2_forward(s.a2, s.p2);

    s.pad_p2.load(s.p2, 1);
    conv3_forward(s.pad_p2, M.c3, s.a3);
    for (double& v : s.a3.v) v = std::tanh(v);
    pool2_forward(s.a3, s.p3);

    double inv = 1.0 / double(s.p3.plane());
    for (int m = 0; m < kMaps3; ++m) {
        const double* p = s.p3.map(m);
        double acc = 0;
        for (size_t k = 0; k < s.p3.plane(); ++k) acc += p[k];
        s.gap[size_t(m)] = acc * inv;
    }
    s.logit = M.fc_b;
    for (int m = 0; m < kMaps3; ++m) s.logit += M.fc_w[size_t(m)] * s.gap[size_t(m)];
    s.F = 1.0 / (1.0 + std::exp(-s.logit));
    return s.F;
}

struct Grads {
    ConvLayer c1, c2, c3;
    std::vector<double> fc_w;
    double fc_b = 0;

    void init_like(const Model& m) {
        c1.init(m.c1.in_maps, m.c1.out_maps);
        c2.init(m.c2.in_maps, m.c2.out_maps);
        c3.init(m.c3.in_maps, m.c3.out_maps);
        fc_w.assign(m.fc_w.size(), 0.0);
        fc_b = 0;
    }
    void zero() {
        std::fill(c1.w.begin(), c1.w.end(), 0.0);
        std::fill(c1.b.begin(), c1.b.end(), 0.0);
        std::fill(c2.w.begin(), c2.w.end(), 0.0);
        std::fill(c2.b.begin(), c2.b.end(), 0.0);
        std::fill(c3.w.begin(), c3.w.end(), 0.0);
        std::fill(c3.b.begin(), c3.b.end(), 0.0);
        std::fill(fc_w.begin(), fc_w.end(), 0.0);
        fc_b = 0;
    }
};

// Backward pass from an already-run forward. Writes the loss gradient w.r.t.
// the input (in pixel units) into dx when non-null; accumulates parameter
// gradients into g when non-null.
inline void backward_impl(const Model& M, Scratch& s, double label, MatD* dx, Grads* g) {
    double dlogit = s.F - label;  // d(cross-entropy)/d(logit)

    if (g) {
        g->fc_b += dlogit;
        for (int m = 0; m < kMaps3; ++m) g->fc_w[size_t(m)] += dlogit * s.gap[size_t(m)];
    }

    // GAP backward into the pooled plane of block 3
    s.d3.reshape(kMaps3, s.p3.h, s.p3.w);
    double inv3 = 1.0 / double(s.p3.plane());
    for (int m = 0; m < kMaps3; ++m) {
        double v = dlogit * M.fc_w[size_t(m)] * inv3;
        double* p = s.d3.map(m);
        std::fill(p, p + s.d3.plane(), v);
    }

    pool2_backward(s.d3, s.a3.h, s.a3.w, s.dp);
    for (size_t k = 0; k < s.dp.v.size(); ++k) s.dp.v[k] *= 1.0 - s.a3.v[k] * s.a3.v[k];
    s.pad_d.load(s.dp, 1);
    conv3_backward(s.pad_p2, M.c3, s.dp, s.pad_d, s.d2, g ? &g->c3 : nullptr);

    pool2_backward(s.d2, s.a2.h, s.a2.w, s.dp);
    for (size_t k = 0; k < s.dp.v.size(); ++k) s.dp.v[k] *= 1.0 - s.a2.v[k] * s.a2.v[k];
    s.pad_d.load(s.dp, 1);
    conv3_backward(s.pad_p1, M.c2, s.dp, s.pad_d, s.d1, g ? &g->c2 : nullptr);

    pool2_backward(s.d1, s.a1.h, s.a1.w, s.dp);
    for (size_t k = 0; k < s.dp.v.size(); ++k) {
        double z = s.z1.v[k];
        s.dp.v[k] *= z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
    }
    s.pad_d.load(s.dp, 1);
    conv3_backward(s.pad_r, M.c1, s.dp, s.pad_d, s.dtmp, g ? &g->c1 : nullptr);

    if (dx) {
        s.pad_d.load(s.dtmp, 2);
        Tensor3 dx0;
        kv_backward(s.pad_d, dx0);
        *dx = MatD(M.input_h, M.input_w);
        // inputs were centered by x/255 - 0.5, so pixel-unit gradients carry 1/255
        for (size_t k = 0; k < dx->size(); ++k) (*dx)[k] = dx0.v[k] / 255.0;
    }
}

inline MatD to_pixels(const ElementGrid& g) {
    MatD m(g.height, g.width);
    for (size_t k = 0; k < g.size(); ++k) m[k] = double(g.elements[k]);
    return m;
}

// Deterministic init calibration: walk the stack once over a calibration
// set, recentering each conv layer's bias and rescaling its weights so the
// pre-activation distribution has zero mean and a fixed std, then bound the
// logit scale. Random-init activations here sit orders of magnitude below
// the nonlinearities' useful range, which stalls descent entirely.
inline void calibrate_model(Model& m, const std::vector<const ElementGrid*>& calib) {
    constexpr double target = 0.6;
    size_t nc = calib.size();
    std::vector<Tensor3> cur(nc);
    Padded pad;
    for (size_t i = 0; i < nc; ++i) {
        Tensor3 x0;
        x0.reshape(1, m.input_h, m.input_w);
        MatD px = to_pixels(*calib[i]);
        for (size_t k = 0; k < px.size(); ++k) x0.v[k] = px[k] / 255.0 - 0.5;
        pad.load(x0, 2);
        kv_forward(pad, cur[i]);
    }
    auto center_scale = [&](ConvLayer& L, bool absolute) {
        double sum = 0, sq = 0;
        size_t n = 0;
        std::vector<Tensor3> z(nc);
        for (size_t i = 0; i < nc; ++i) {
            pad.load(cur[i], 1);
            conv3_forward(pad, L, z[i]);
            for (double v : z[i].v) {
                sum += v;
                sq += v * v;
                ++n;
            }
        }
        double mean = sum / double(n);
        double sd = std::sqrt(std::max(1e-300, sq / double(n) - mean * mean));
        double c = target / sd;
        for (double& w : L.w) w *= c;
        for (double& b : L.b) b = (b - mean) * c;
        for (size_t i = 0; i < nc; ++i) {
            for (double& v : z[i].v) {
                v = (v - mean) * c;
                v = absolute ? std::abs(v) : std::tanh(v);
            }
            Tensor3 pooled;
            pool2_forward(z[i], pooled);
            cur[i] = std::move(pooled);
        }
    };
    center_scale(m.c1, true);
    center_scale(m.c2, false);
    center_scale(m.c3, false);

    double sum = 0, sq = 0;
    for (size_t i = 0; i < nc; ++i) {
        double logit = 0;
        double inv = 1.0 / double(cur[i].plane());
        for (int mm = 0; mm < kMaps3; ++mm) {
            const double* p = cur[i].map(mm);
            double acc = 0;
            for (size_t k = 0; k < cur[i].plane(); ++k) acc += p[k];
            logit += m.fc_w[size_t(mm)] * acc * inv;
        }
        sum += logit;
        sq += logit * logit;
    }
    double mean = sum / double(nc);
    double sd = std::sqrt(std::max(1e-300, sq / double(nc) - mean * mean));
    // cap the readout gain: the calibration-set logit spread can be tiny and
    // an uncapped 0.5/sd amplifies distribution shift into saturation
    double c = std::min(0.5 / sd, 100.0);
    for (double& w : m.fc_w) w *= c;
    m.fc_b = -mean * c;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Public surface
// --------------------------------------------------------------------------

inline double forward(const Model& m, const MatD& pixels) {
    detail::Scratch s;
    return detail::forward_impl(m, pixels, s);
}

inline double forward(const Model& m, const ElementGrid& g) {
    return forward(m, detail::to_pixels(g));
}

inline int classify(const Model& m, const ElementGrid& g) { return forward(m, g) >= 0.5 ? 1 : 0; }

inline double loss_from_probability(double F, int label) {
    double f = std::clamp(F, 1e-7, 1.0 - 1e-7);
    return label ? -std::log(f) : -std::log(1.0 - f);
}

inline double loss(const Model& m, const ElementGrid& g, int label) {
    return loss_from_probability(forward(m, g), label);
}

inline GradientMap input_gradient(const Model& m, const ElementGrid& g, int target_label) {
    detail::Scratch s;
    detail::forward_impl(m, detail::to_pixels(g), s);
    MatD dx;
    detail::backward_impl(m, s, double(target_label), &dx, nullptr);
    return dx;
}

inline GradientMap input_gradient(const Model& m, const MatD& pixels, int target_label) {
    detail::Scratch s;
    detail::forward_impl(m, pixels, s);
    MatD dx;
    detail::backward_impl(m, s, double(target_label), &dx, nullptr);
    return dx;
}

// Forward probability plus input gradient in one pass; the embedding loop
// needs both and the forward work is shared.
inline std::pair<double, GradientMap> forward_and_gradient(const Model& m, const ElementGrid& g,
                                                           int target_label) {
    detail::Scratch s;
    double F = detail::forward_impl(m, detail::to_pixels(g), s);
    MatD dx;
    detail::backward_impl(m, s, double(target_label), &dx, nullptr);
    return {F, std::move(dx)};
}

struct TrainParams {
    // plain momentum follows the classic recipe; normalized momentum takes a
    // fixed-size step along each parameter tensor's gradient direction, which
    // is what makes this shallow stack trainable at small-sample scale where
    // raw gradient magnitudes span several orders across layers
    enum class Optimizer { momentum, normalized_momentum };

    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 64;  // images per batch, half covers half their stegos
    int64_t iterations = 5000;
    Optimizer optimizer = Optimizer::momentum;
    // center and rescale each layer on a calibration batch before descending,
    // so activations start in the responsive range of the nonlinearities
    bool calibrate_init = false;
    int threads = 0;  // 0: hardware concurrency
};

// Runs fn(i) for i in [0, n); outputs must go to per-index slots so that the
// caller can reduce in index order.
inline void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn) {
    int hw = int(std::thread::hardware_concurrency());
    int t = threads > 0 ? threads : (hw > 0 ? hw : 1);
    t = int(std::min<size_t>(size_t(t), n));
    if (t <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int k = 0; k < t; ++k)
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

inline Model train(const std::vector<const ElementGrid*>& covers,
                   const std::vector<const ElementGrid*>& stegos, const TrainParams& hp,
                   uint64_t seed, std::vector<double>* loss_trace = nullptr) {
    if (covers.empty() || stegos.empty()) fail_data("cnn train: empty training set");
    if (covers.size() != stegos.size())
        fail_data("cnn train: cover/stego sets must be paired with equal cardinality");
    int h = covers[0]->height, w = covers[0]->width;
    for (const ElementGrid* g : covers)
        if (g->height != h || g->width != w) fail_data("cnn train: inconsistent cover dimensions");
    for (const ElementGrid* g : stegos)
        if (g->height != h || g->width != w) fail_data("cnn train: inconsistent stego dimensions");

    Model model = make_model(h, w, derive_seed(seed, 0));
    size_t n = covers.size();
    size_t ppb = std::min<size_t>(std::max(1, hp.batch_size / 2), n);

    if (hp.calibrate_init && hp.iterations > 0) {
        // fixed leading slice, balanced across classes, deterministic
        std::vector<const ElementGrid*> calib;
        for (size_t i = 0; i < std::min<size_t>(n, 16); ++i) {
            calib.push_back(covers[i]);
            calib.push_back(stegos[i]);
        }
        detail::calibrate_model(model, calib);
    }

    Rng shuffle_rng(derive_seed(seed, 1));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_rng.shuffle(order);
    size_t pos = 0;

    detail::Grads total, vel;
    total.init_like(model);
    vel.init_like(model);

    size_t nimg = 2 * ppb;
    std::vector<detail::Grads> slot_g(nimg);
    std::vector<double> slot_loss(nimg, 0.0);
    std::vector<detail::Scratch> scratch(nimg);
    for (auto& g : slot_g) g.init_like(model);

    for (int64_t it = 0; it < hp.iterations; ++it) {
        if (pos + ppb > n) {
            shuffle_rng.shuffle(order);
            pos = 0;
        }
        // slot layout: pair p -> cover at 2p, its stego counterpart at 2p+1
        std::vector<const ElementGrid*> imgs(nimg);
        for (size_t p = 0; p < ppb; ++p) {
            imgs[2 * p] = covers[order[pos + p]];
            imgs[2 * p + 1] = stegos[order[pos + p]];
        }
        pos += ppb;

        parallel_for(nimg, hp.threads, [&](size_t b) {
            slot_g[b].zero();
            double F = detail::forward_impl(model, detail::to_pixels(*imgs[b]), scratch[b]);
            double label = (b & 1) ? 1.0 : 0.0;
            slot_loss[b] = loss_from_probability(F, int(label));
            detail::backward_impl(model, scratch[b], label, nullptr, &slot_g[b]);
        });

        total.zero();
        double batch_loss = 0;
        for (size_t b = 0; b < nimg; ++b) {  // fixed accumulation order
            batch_loss += slot_loss[b];
            const detail::Grads& g = slot_g[b];
            for (size_t k = 0; k < total.c1.w.size(); ++k) total.c1.w[k] += g.c1.w[k];
            for (size_t k = 0; k < total.c1.b.size(); ++k) total.c1.b[k] += g.c1.b[k];
            for (size_t k = 0; k < total.c2.w.size(); ++k) total.c2.w[k] += g.c2.w[k];
            for (size_t k = 0; k < total.c2.b.size(); ++k) total.c2.b[k] += g.c2.b[k];
            for (size_t k = 0; k < total.c3.w.size(); ++k) total.c3.w[k] += g.c3.w[k];
            for (size_t k = 0; k < total.c3.b.size(); ++k) total.c3.b[k] += g.c3.b[k];
            for (size_t k = 0; k < total.fc_w.size(); ++k) total.fc_w[k] += g.fc_w[k];
            total.fc_b += g.fc_b;
        }
        if (loss_trace) loss_trace->push_back(batch_loss / double(nimg));

        double scale = 1.0 / double(nimg);
        bool norm = hp.optimizer == TrainParams::Optimizer::normalized_momentum;
        auto step = [&](std::vector<double>& wv, std::vector<double>& vv,
                        const std::vector<double>& gv) {
            double rate = hp.learning_rate * scale;
            if (norm) {
                double nrm = 0;
                for (double g : gv) nrm += g * g;
                rate = hp.learning_rate / (std::sqrt(nrm) + 1e-12);
            }
            for (size_t k = 0; k < wv.size(); ++k) {
                vv[k] = hp.momentum * vv[k] - rate * gv[k];
                wv[k] += vv[k];
            }
        };
        step(model.c1.w, vel.c1.w, total.c1.w);
        step(model.c1.b, vel.c1.b, total.c1.b);
        step(model.c2.w, vel.c2.w, total.c2.w);
        step(model.c2.b, vel.c2.b, total.c2.b);
        step(model.c3.w, vel.c3.w, total.c3.w);
        step(model.c3.b, vel.c3.b, total.c3.b);
        step(model.fc_w, vel.fc_w, total.fc_w);
        {
            double rate = norm ? hp.learning_rate / (std::abs(total.fc_b) + 1e-12)
                               : hp.learning_rate * scale;
            double& vb = vel.fc_b;
            vb = hp.momentum * vb - rate * total.fc_b;
            model.fc_b += vb;
        }
        model.iterations = it + 1;
    }
    return model;
}

// --------------------------------------------------------------------------
// Model file: "ACN1", u32le dims, architecture hash, seed, iteration counter,
// then parameter tensors f64le in declaration order. Bit-exact.
// --------------------------------------------------------------------------

namespace detail {

inline uint64_t arch_hash(const Model& m) {
    std::string d = "cnn/kv5/abs-tanh-tanh/pool2x3/gap/logistic h=" + std::to_string(m.input_h) +
                    " w=" + std::to_string(m.input_w) + " maps=8,16,32";
    return fnv1a64(d.data(), d.size());
}

inline void put_u64le(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline uint64_t get_u64le(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline std::string encode_model(const Model& m) {
    std::string out = "ACN1";
    put_u32le(out, uint32_t(m.input_h));
    put_u32le(out, uint32_t(m.input_w));
    detail::put_u64le(out, detail::arch_hash(m));
    detail::put_u64le(out, m.seed);
    detail::put_u64le(out, uint64_t(m.iterations));
    auto dump = [&](const std::vector<double>& v) {
        for (double d : v) put_f64le(out, d);
    };
    dump(m.c1.w);
    dump(m.c1.b);
    dump(m.c2.w);
    dump(m.c2.b);
    dump(m.c3.w);
    dump(m.c3.b);
    dump(m.fc_w);
    put_f64le(out, m.fc_b);
    return out;
}

inline Model decode_model(const std::string& bytes) {
    if (bytes.size() < 36 || bytes.compare(0, 4, "ACN1") != 0)
        fail_data("model file: missing ACN1 magic");
    const uint8_t* p = reinterpret_cast<const uint8_t*>(bytes.data());
    int h = int(get_u32le(p + 4)), w = int(get_u32le(p + 8));
    Model m = make_model(h, w, 0);
    if (detail::get_u64le(p + 12) != detail::arch_hash(m))
        fail_data("model file: architecture hash mismatch");
    m.seed = detail::get_u64le(p + 20);
    m.iterations = int64_t(detail::get_u64le(p + 28));

    size_t nparams = m.c1.w.size() + m.c1.b.size() + m.c2.w.size() + m.c2.b.size() +
                     m.c3.w.size() + m.c3.b.size() + m.fc_w.size() + 1;
    if (bytes.size() != 36 + nparams * 8) fail_data("model file: wrong parameter payload size");
    size_t off = 36;
    auto pull = [&](std::vector<double>& v) {
        for (double& d : v) {
            d = get_f64le(p + off);
            off += 8;
        }
    };
    pull(m.c1.w);
    pull(m.c1.b);
    pull(m.c2.w);
    pull(m.c2.b);
    pull(m.c3.w);
    pull(m.c3.b);
    pull(m.fc_w);
    m.fc_b = get_f64le(p + off);
    return m;
}

inline uint64_t model_digest(const Model& m) {
    std::string bytes = encode_model(m);
    return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace stegama::cnn
