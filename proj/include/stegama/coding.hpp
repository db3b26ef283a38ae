// Payload-constrained embedding. Two coders share the cost interface:
//  - the optimal embedding simulator (samples ternary modifications from the
//    payload-constrained Gibbs distribution), used by the experiment harness;
//  - a binary LSB-layer syndrome-trellis coder for real message embedding,
//    with the +/-1 direction chosen by the cheaper ternary cost.
#pragma once

#include <charconv>
#include <limits>
#include <span>

#include "stegama/cost.hpp"

namespace stegama {

using BitVec = std::vector<uint8_t>;  // one bit per entry, values 0/1

// --------------------------------------------------------------------------
// Gibbs modification probabilities and the payload (entropy) constraint.
// --------------------------------------------------------------------------

struct ModProbabilities {
    MatD p_plus;
    MatD p_minus;
};

inline ModProbabilities ternary_probs(const CostMap& cost, double lambda) {
    if (lambda < 0) fail_config("ternary_probs: lambda must be non-negative");
    int h = cost.rows(), w = cost.cols();
    ModProbabilities p{MatD(h, w), MatD(h, w)};
    for (size_t k = 0; k < p.p_plus.size(); ++k) {
        double ep = std::exp(-lambda * cost.rho_plus[k]);
        double em = std::exp(-lambda * cost.rho_minus[k]);
        double z = 1.0 + ep + em;
        p.p_plus[k] = ep / z;
        p.p_minus[k] = em / z;
    }
    return p;
}

namespace detail {

inline double entropy3(double pp, double pm) {
    double p0 = 1.0 - pp - pm;
    double s = 0;
    if (pp > 0) s -= pp * std::log2(pp);
    if (pm > 0) s -= pm * std::log2(pm);
    if (p0 > 0) s -= p0 * std::log2(p0);
    return s;
}

inline double entropy_at(const CostMap& cost, const MatU8& mask, double lambda) {
    double total = 0;
    for (size_t k = 0; k < mask.size(); ++k) {
        if (!mask[k]) continue;
        double ep = std::exp(-lambda * cost.rho_plus[k]);
        double em = std::exp(-lambda * cost.rho_minus[k]);
        double z = 1.0 + ep + em;
        total += entropy3(ep / z, em / z);
    }
    return total;
}

}  // namespace detail

// Embeddable payload of a probability map over the usable elements, in bits.
inline double payload_entropy(const ModProbabilities& probs, const MatU8& usable_mask) {
    if (!probs.p_plus.same_dims(usable_mask)) fail_data("payload_entropy: shape mismatch");
    double total = 0;
    for (size_t k = 0; k < usable_mask.size(); ++k)
        if (usable_mask[k]) total += detail::entropy3(probs.p_plus[k], probs.p_minus[k]);
    return total;
}

// Bisection for the multiplier lambda with payload_entropy(lambda) = target.
// Entropy is non-increasing in lambda, so the bracket [0, hi] is found by
// doubling and then bisected to within 1e-6 bits per usable element.
inline double solve_lambda(const CostMap& cost, const MatU8& usable_mask, double target_bits) {
    int n = 0;
    for (uint8_t u : usable_mask) n += u != 0;
    if (n == 0) fail_data("solve_lambda: no usable elements");
    if (!(target_bits > 0)) fail_config("solve_lambda: target payload must be positive");

    double max_ent = n * std::log2(3.0);
    if (target_bits > max_ent * (1 + 1e-12))
        fail_infeasible("solve_lambda: target above maximum achievable entropy");

    double tol = 1e-6 * n;
    if (max_ent <= target_bits + tol) return 0.0;

    double hi = 1.0;
    int guard = 0;
    while (detail::entropy_at(cost, usable_mask, hi) > target_bits) {
        hi *= 2;
        if (++guard > 200) fail_infeasible("solve_lambda: bracket search did not terminate");
    }
    double lo = 0.0;
    for (int step = 0; step < 200; ++step) {
        double mid = 0.5 * (lo + hi);
        double ent = detail::entropy_at(cost, usable_mask, mid);
        if (std::abs(ent - target_bits) <= tol) return mid;
        (ent > target_bits ? lo : hi) = mid;
    }
    fail_infeasible("solve_lambda: bisection did not converge in 200 steps");
}

// --------------------------------------------------------------------------
// Optimal embedding simulator: independent per-element ternary sampling.
// Wet directions carry probability zero, so clamps are never violated; a
// range guard keeps that true even for hand-built cost maps.
// --------------------------------------------------------------------------

inline ElementGrid simulate_embedding(const ElementGrid& grid, const CostMap& cost,
                                      double target_bits, uint64_t rng_seed) {
    if (target_bits <= 0) return grid;
    if (!cost.rho_plus.same_dims(grid.elements)) fail_data("simulate_embedding: shape mismatch");
    double lambda = solve_lambda(cost, grid.usable_mask, target_bits);
    ModProbabilities p = ternary_probs(cost, lambda);

    ElementGrid stego = grid;
    Rng rng(rng_seed);
    for (size_t k = 0; k < grid.size(); ++k) {
        if (!grid.usable_mask[k]) continue;
        double u = rng.uniform01();
        int v = stego.elements[k];
        if (u < p.p_plus[k]) {
            if (v < 255) stego.elements[k] = uint8_t(v + 1);
        } else if (u < p.p_plus[k] + p.p_minus[k]) {
            if (v > 0) stego.elements[k] = uint8_t(v - 1);
        }
    }
    return stego;
}

// --------------------------------------------------------------------------
// Syndrome-trellis coding. The submatrix is given as one bit pattern per
// column (bit b = row b); message bit i consumes the w columns starting at
// element i*w of the embedding order, and the syndrome of the stego LSBs
// recovers the message with no embedding metadata.
// --------------------------------------------------------------------------

struct StcParams {
    int constraint_height = 7;
    std::vector<uint32_t> columns{0x6d, 0x47};
    int rate_num = 1;
    int rate_den = 2;

    int width() const { return int(columns.size()); }

    void validate() const {
        if (constraint_height < 2 || constraint_height > 12)
            fail_config("stc: constraint height out of range [2, 12]");
        if (columns.empty()) fail_config("stc: no submatrix columns");
        for (uint32_t c : columns)
            if (c == 0 || c >= (1u << constraint_height))
                fail_config("stc: column pattern out of range");
        if ((columns.front() & 1u) == 0)
            fail_config("stc: first column must have its first bit set");
        if ((columns.back() >> (constraint_height - 1)) == 0)
            fail_config("stc: last column must have its last bit set");
        if (rate_num < 1 || rate_den < 1 || rate_num * int(columns.size()) != rate_den)
            fail_config("stc: payload rate must equal 1/width");
    }
};

// "h=<int>;cols=<hex per column>;rate=<k>/<n>"
inline std::string format_stc_params(const StcParams& p) {
    std::string s = "h=" + std::to_string(p.constraint_height) + ";cols=";
    for (size_t i = 0; i < p.columns.size(); ++i) {
        char buf[16];
        auto r = std::to_chars(buf, buf + sizeof buf, p.columns[i], 16);
        if (i) s += ',';
        s.append(buf, r.ptr);
    }
    s += ";rate=" + std::to_string(p.rate_num) + "/" + std::to_string(p.rate_den);
    return s;
}

inline StcParams parse_stc_params(const std::string& text) {
    StcParams p;
    p.columns.clear();
    int fields = std::sscanf(text.c_str(), "h=%d;", &p.constraint_height);
    size_t cpos = text.find(";cols=");
    size_t rpos = text.find(";rate=");
    if (fields != 1 || cpos == std::string::npos || rpos == std::string::npos || rpos < cpos)
        fail_config("stc params: expected h=<int>;cols=<hex,...>;rate=<k>/<n>");
    std::string cols = text.substr(cpos + 6, rpos - cpos - 6);
    size_t start = 0;
    while (start <= cols.size()) {
        size_t comma = cols.find(',', start);
        std::string tok = cols.substr(start, comma == std::string::npos ? comma : comma - start);
        if (tok.empty()) fail_config("stc params: empty column token");
        uint32_t v = 0;
        auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v, 16);
        if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size())
            fail_config("stc params: bad hex column: " + tok);
        p.columns.push_back(v);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (std::sscanf(text.c_str() + rpos, ";rate=%d/%d", &p.rate_num, &p.rate_den) != 2)
        fail_config("stc params: bad rate field");
    p.validate();
    return p;
}

namespace detail {

struct FlipPlan {
    std::vector<double> cost;  // LSB flip cost per used element
    std::vector<int8_t> dir;   // realized +/-1 direction when flipped
    std::vector<uint8_t> lsb;  // cover LSBs
};

inline FlipPlan stc_flip_plan(const ElementGrid& g, const CostMap& c, std::span<const int> order,
                              size_t used) {
    FlipPlan f;
    f.cost.resize(used);
    f.dir.resize(used);
    f.lsb.resize(used);
    for (size_t t = 0; t < used; ++t) {
        int el = order[t];
        int v = g.elements[size_t(el)];
        f.lsb[t] = uint8_t(v & 1);
        double rp = c.rho_plus[size_t(el)], rm = c.rho_minus[size_t(el)];
        if (v == 0) {
            f.dir[t] = 1;
            f.cost[t] = rp;
        } else if (v == 255) {
            f.dir[t] = -1;
            f.cost[t] = rm;
        } else if (rp <= rm) {  // tie: prefer +1
            f.dir[t] = 1;
            f.cost[t] = rp;
        } else {
            f.dir[t] = -1;
            f.cost[t] = rm;
        }
    }
    return f;
}

}  // namespace detail

inline ElementGrid stc_embed(const ElementGrid& grid, const CostMap& cost, const BitVec& message,
                             const StcParams& params, std::span<const int> order) {
    params.validate();
    if (message.empty()) return grid;
    int h = params.constraint_height;
    int w = params.width();
    size_t k = message.size();
    size_t used = k * size_t(w);
    if (used > order.size()) fail_data("stc_embed: message too long for the payload rate");

    detail::FlipPlan plan = detail::stc_flip_plan(grid, cost, order, used);

    const double inf = std::numeric_limits<double>::infinity();
    size_t nstates = size_t(1) << h;
    std::vector<double> cur(nstates, inf), nxt(nstates);
    std::vector<uint64_t> choice(((used * nstates) + 63) / 64, 0);
    auto set_choice = [&](size_t t, size_t s) {
        size_t bit = t * nstates + s;
        choice[bit >> 6] |= uint64_t(1) << (bit & 63);
    };
    auto get_choice = [&](size_t t, size_t s) {
        size_t bit = t * nstates + s;
        return (choice[bit >> 6] >> (bit & 63)) & 1;
    };

    cur[0] = 0.0;
    for (size_t i = 0; i < k; ++i) {
        // columns are truncated where the submatrix would reach past row k-1
        size_t rows_left = k - i;
        uint32_t trunc = rows_left >= size_t(h) ? (uint32_t(1) << h) - 1
                                                : (uint32_t(1) << rows_left) - 1;
        for (int j = 0; j < w; ++j) {
            size_t t = i * w + j;
            uint32_t col = params.columns[size_t(j)] & trunc;
            double f = plan.cost[t];
            uint8_t cl = plan.lsb[t];
            double cost0 = cl == 0 ? 0.0 : f;  // stego LSB 0
            double cost1 = cl == 1 ? 0.0 : f;  // stego LSB 1
            for (size_t s = 0; s < nstates; ++s) {
                double c0 = cur[s] + cost0;
                double c1 = cur[s ^ col] + cost1;
                bool pick1 = c1 < c0 || (c1 == c0 && cl == 1);
                nxt[s] = pick1 ? c1 : c0;
                if (pick1) set_choice(t, s);
            }
            std::swap(cur, nxt);
        }
        uint32_t mb = message[i] & 1;
        std::fill(nxt.begin(), nxt.end(), inf);
        for (size_t s = 0; s < nstates / 2; ++s) nxt[s] = cur[(s << 1) | mb];
        std::swap(cur, nxt);
    }

    double total = cur[0];
    if (!(total < CostMap::wet_value * 0.5))
        fail_infeasible("stc_embed: trellis infeasible (forced through wet elements)");

    // backtrack from the final all-zero state
    std::vector<uint8_t> x(used);
    size_t s = 0;
    for (size_t i = k; i-- > 0;) {
        size_t rows_left = k - i;
        uint32_t trunc = rows_left >= size_t(h) ? (uint32_t(1) << h) - 1
                                                : (uint32_t(1) << rows_left) - 1;
        size_t sigma = (s << 1) | (message[i] & 1);
        for (int j = w; j-- > 0;) {
            size_t t = i * w + j;
            uint32_t col = params.columns[size_t(j)] & trunc;
            uint8_t xt = uint8_t(get_choice(t, sigma));
            x[t] = xt;
            if (xt) sigma ^= col;
        }
        s = sigma;
    }

    ElementGrid stego = grid;
    for (size_t t = 0; t < used; ++t) {
        if (x[t] == plan.lsb[t]) continue;
        int el = order[t];
        stego.elements[size_t(el)] = uint8_t(int(stego.elements[size_t(el)]) + plan.dir[t]);
    }
    return stego;
}

// Syndrome of the stego LSBs along the embedding order. Needs no knowledge
// of how the payload was split across element groups.
inline BitVec stc_extract(const ElementGrid& stego, const StcParams& params,
                          std::span<const int> order, size_t message_len) {
    params.validate();
    int h = params.constraint_height;
    int w = params.width();
    if (message_len * size_t(w) > order.size())
        fail_data("stc_extract: message length inconsistent with the payload rate");
    BitVec m(message_len, 0);
    for (size_t i = 0; i < message_len; ++i)
        for (int j = 0; j < w; ++j) {
            int el = order[i * w + j];
            if ((stego.elements[size_t(el)] & 1) == 0) continue;
            uint32_t col = params.columns[size_t(j)];
            for (int b = 0; b < h; ++b) {
                size_t r = i + size_t(b);
                if (r < message_len) m[r] ^= (col >> b) & 1;
            }
        }
    return m;
}

}  // namespace stegama
