// Adversarial embedding with minimum alteration. Elements are split by a
// keyed embedding order into a common prefix (embedded with baseline costs)
// and an adjustable suffix whose costs are re-weighted by the targeted
// classifier's input gradient. The adjustable fraction beta is the smallest
// grid value that flips the classifier to "cover"; if none does, a plain
// conventional stego is emitted instead.
#pragma once

#include <charconv>
#include <functional>
#include <optional>

#include "stegama/cnn.hpp"
#include "stegama/coding.hpp"

namespace stegama {

enum class OrderKind { keyed, fixed_raster };

struct OrderSpec {
    OrderKind kind = OrderKind::keyed;
    uint64_t key = 0;
};

struct GroupPartition {
    std::vector<int> order;  // permutation of all element indices
    double beta = 0.0;
    int l1 = 0;  // common prefix length; suffix of size N - l1 is adjustable

    std::span<const int> common() const { return {order.data(), size_t(l1)}; }
    std::span<const int> adjustable() const {
        return {order.data() + l1, order.size() - size_t(l1)};
    }
};

inline GroupPartition make_partition(const ElementGrid& g, const OrderSpec& spec, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) fail_config("make_partition: beta must lie in [0, 1]");
    GroupPartition p;
    p.beta = beta;
    size_t n = g.size();
    p.order.resize(n);
    for (size_t i = 0; i < n; ++i) p.order[i] = int(i);
    if (spec.kind == OrderKind::keyed) {
        Rng rng(spec.key);
        rng.shuffle(p.order);
    }
    p.l1 = int(std::floor(double(n) * (1.0 - beta) + 0.5));  // round half up
    return p;
}

// Usable elements in embedding order. This is everything the receiver needs
// besides the code parameters: it depends on the key, never on beta.
inline std::vector<int> embedding_order(const ElementGrid& g, const OrderSpec& spec) {
    GroupPartition p = make_partition(g, spec, 0.0);
    std::vector<int> o;
    o.reserve(g.size());
    for (int idx : p.order)
        if (g.usable_mask[size_t(idx)]) o.push_back(idx);
    return o;
}

using CostProvider = std::function<CostMap(const ElementGrid&)>;

struct AmaConfig {
    enum class Mode { inverse_sign, same_sign, fixed_beta };
    enum class Coder { simulator, stc };

    double alpha = 2.0;
    double delta_beta = 0.1;
    Mode mode = Mode::inverse_sign;
    double beta0 = 0.0;  // fixed_beta mode only
    Coder coder = Coder::simulator;
    OrderSpec order{};
    uint64_t seed = 0;
    StcParams stc{};
    BitVec message;  // stc coder only
    bool diagnostics = false;
};

struct AmaResult {
    ElementGrid stego;
    double beta_used = 0.0;
    bool success = false;
    bool fallback = false;
    int change_count = 0;
    double payload_bits = 0.0;
    std::optional<CostMap> phase_costs;    // adjusted costs at the returned beta
    std::optional<GradientMap> gradient;   // gradient snapshot at the returned beta
};

namespace detail {

inline double round_half_up(double x) { return std::floor(x + 0.5); }

inline std::vector<double> beta_grid(const AmaConfig& cfg) {
    if (cfg.mode == AmaConfig::Mode::fixed_beta) {
        if (!(cfg.beta0 >= 0 && cfg.beta0 <= 1)) fail_config("ama: fixed beta out of [0, 1]");
        return {cfg.beta0};
    }
    if (!(cfg.delta_beta > 0 && cfg.delta_beta <= 1)) fail_config("ama: delta_beta out of (0, 1]");
    std::vector<double> betas;
    for (int i = 0; i * cfg.delta_beta < 1.0 - 1e-9; ++i) betas.push_back(i * cfg.delta_beta);
    betas.push_back(1.0);
    return betas;
}

// Simulator embedding restricted to a subset of element indices.
inline ElementGrid embed_subset_simulator(const ElementGrid& grid, const CostMap& cost,
                                          std::span<const int> subset, double bits, uint64_t seed) {
    if (bits <= 0) return grid;
    ElementGrid masked = grid;
    std::fill(masked.usable_mask.begin(), masked.usable_mask.end(), uint8_t(0));
    for (int k : subset)
        if (grid.usable_mask[size_t(k)]) masked.usable_mask[size_t(k)] = 1;
    ElementGrid stego = simulate_embedding(masked, cost, bits, seed);
    stego.usable_mask = grid.usable_mask;
    return stego;
}

// Syndrome rows [row_lo, row_lo + out.size()) contributed by the first
// nblocks blocks of `order`, with untruncated columns. Used to carry the
// prefix contribution of split STC embeddings into the suffix message.
inline void syndrome_rows(const ElementGrid& s, const StcParams& p, std::span<const int> order,
                          size_t nblocks, size_t row_lo, std::span<uint8_t> out) {
    int w = p.width();
    for (size_t i = 0; i < nblocks; ++i)
        for (int j = 0; j < w; ++j) {
            int el = order[i * size_t(w) + size_t(j)];
            if ((s.elements[size_t(el)] & 1) == 0) continue;
            uint32_t col = p.columns[size_t(j)];
            for (int b = 0; b < p.constraint_height; ++b) {
                if (!((col >> b) & 1)) continue;
                size_t r = i + size_t(b);
                if (r >= row_lo && r < row_lo + out.size()) out[r - row_lo] ^= 1;
            }
        }
}

}  // namespace detail

// Single-phase embedding over all usable elements with baseline costs; the
// conventional path and the fallback target.
inline ElementGrid conventional_embed(const ElementGrid& cover, double payload_bits,
                                      const CostProvider& provider, const AmaConfig& cfg,
                                      uint64_t seed) {
    CostMap base = provider(cover);
    if (cfg.coder == AmaConfig::Coder::simulator) {
        return simulate_embedding(cover, base, payload_bits, seed);
    }
    GroupPartition p = make_partition(cover, cfg.order, 0.0);
    std::vector<int> order = embedding_order(cover, cfg.order);
    return stc_embed(cover, base, cfg.message, cfg.stc, order);
}

inline AmaResult ama_embed(const ElementGrid& cover, double payload_bits,
                           const CostProvider& provider, const cnn::Model& model,
                           const AmaConfig& cfg) {
    if (cover.usable_count() == 0) fail_data("ama: cover has no usable elements");
    if (cover.height != model.input_h || cover.width != model.input_w)
        fail_data("ama: model input size does not match the cover");
    if (!(cfg.alpha > 1)) fail_config("ama: alpha must be > 1");

    size_t usable = size_t(cover.usable_count());
    if (cfg.coder == AmaConfig::Coder::simulator) {
        if (!(payload_bits > 0) || payload_bits > double(usable) * std::log2(3.0))
            fail_infeasible("ama: payload infeasible for the usable elements");
    } else {
        cfg.stc.validate();
        if (cfg.message.size() != size_t(std::llround(payload_bits)))
            fail_config("ama: stc coder needs payload_bits == message length");
        if (cfg.message.size() * size_t(cfg.stc.width()) > usable)
            fail_infeasible("ama: message too long for the usable elements");
    }

    CostMap base = provider(cover);
    AdjustMode adjust =
        cfg.mode == AmaConfig::Mode::same_sign ? AdjustMode::same_sign : AdjustMode::inverse_sign;
    std::vector<double> betas = detail::beta_grid(cfg);

    for (size_t bi = 0; bi < betas.size(); ++bi) {
        double beta = betas[bi];
        uint64_t seed_b = derive_seed(cfg.seed, bi);  // fresh stream per beta step
        GroupPartition part = make_partition(cover, cfg.order, beta);
        double k1 = detail::round_half_up(payload_bits * (1.0 - beta));
        double k2 = payload_bits - k1;

        ElementGrid zc = cover;
        ElementGrid z;
        GradientMap grad;
        CostMap adjusted;
        bool have_grad = false;

        if (cfg.coder == AmaConfig::Coder::simulator) {
            zc = detail::embed_subset_simulator(cover, base, part.common(), k1,
                                                derive_seed(seed_b, 1));
            if (k2 > 0 && part.l1 < int(part.order.size())) {
                grad = cnn::input_gradient(model, zc, 0);
                have_grad = true;
                adjusted = adjust_costs(base, grad, cfg.alpha, adjust, part.adjustable());
                z = detail::embed_subset_simulator(zc, adjusted, part.adjustable(), k2,
                                                   derive_seed(seed_b, 2));
            } else {
                z = zc;
            }
        } else {
            std::vector<int> order = embedding_order(cover, cfg.order);
            size_t k1n = size_t(k1), kn = cfg.message.size();
            int w = cfg.stc.width();
            BitVec m1(cfg.message.begin(), cfg.message.begin() + long(k1n));
            zc = stc_embed(cover, base, m1, cfg.stc,
                           std::span<const int>(order).first(k1n * size_t(w)));
            if (kn > k1n) {
                grad = cnn::input_gradient(model, zc, 0);
                have_grad = true;
                adjusted = adjust_costs(base, grad, cfg.alpha, adjust, part.adjustable());
                // the prefix blocks spill into the first h-1 suffix syndrome
                // rows; fold that carry into the suffix message so one global
                // extraction recovers the original bits
                size_t k2n = kn - k1n;
                std::vector<uint8_t> carry(std::min(k2n, size_t(cfg.stc.constraint_height - 1)), 0);
                detail::syndrome_rows(zc, cfg.stc, order, k1n, k1n, carry);
                BitVec m2(cfg.message.begin() + long(k1n), cfg.message.end());
                for (size_t i = 0; i < carry.size(); ++i) m2[i] ^= carry[i];
                std::span<const int> suffix(order.data() + k1n * size_t(w), k2n * size_t(w));
                z = stc_embed(zc, adjusted, m2, cfg.stc, suffix);
            } else {
                z = zc;
            }
        }

        if (cnn::classify(model, z) == 0) {
            AmaResult r;
            r.stego = std::move(z);
            r.beta_used = beta;
            r.success = true;
            r.change_count = diff(cover, r.stego).change_count();
            r.payload_bits = payload_bits;
            if (cfg.diagnostics) {
                r.phase_costs = have_grad ? adjusted : base;
                r.gradient = have_grad ? grad : GradientMap(cover.height, cover.width, 0.0);
            }
            return r;
        }
    }

    // grid exhausted: conventional stego at full payload, fresh seed
    AmaResult r;
    r.stego = conventional_embed(cover, payload_bits, provider, cfg,
                                 derive_seed(cfg.seed, betas.size()));
    r.beta_used = betas.back();
    r.success = false;
    r.fallback = true;
    r.change_count = diff(cover, r.stego).change_count();
    r.payload_bits = payload_bits;
    return r;
}

// Fraction of adjustable modified elements whose sign opposes the gradient.
// Defined as 0.5 (neutral) when no adjustable element has both a nonzero
// modification and a nonzero gradient.
inline double sign_accordance(const ModificationMap& mod, const GradientMap& grad,
                              std::span<const int> adjustable) {
    if (!mod.values.same_dims(grad)) fail_data("sign_accordance: shape mismatch");
    int total = 0, hits = 0;
    for (int k : adjustable) {
        int m = mod.values[size_t(k)];
        double g = grad[size_t(k)];
        if (m == 0 || g == 0) continue;
        ++total;
        hits += (m > 0) == (g < 0);
    }
    return total == 0 ? 0.5 : double(hits) / double(total);
}

inline std::string ama_result_json(const AmaResult& r) {
    auto num = [](double v) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, res.ptr);
    };
    return std::string("{\"beta\":") + num(r.beta_used) +
           ",\"success\":" + (r.success ? "true" : "false") +
           ",\"fallback\":" + (r.fallback ? "true" : "false") +
           ",\"change_count\":" + std::to_string(r.change_count) +
           ",\"payload_bits\":" + num(r.payload_bits) + "}";
}

}  // namespace stegama
