// Test-side reference implementations, independent of the library's
// orchestration code. Shared by the unit suites and the acceptance runner.
#pragma once

#include "stegama/ama.hpp"

namespace stegama::testsupport {

struct BetaScan {
    double beta = 0.0;
    bool success = false;
};

// Exhaustive minimum-beta reference: re-runs the two embedding phases for
// every grid value from scratch, composing public primitives directly and
// deriving the same per-step seed stream as the library loop.
inline BetaScan beta_scan_oracle(const ElementGrid& cover, double payload_bits,
                                 const cnn::Model& model, const AmaConfig& cfg) {
    CostMap base = baseline_costs(cover);

    std::vector<double> betas;
    for (int i = 0; i * cfg.delta_beta < 1.0 - 1e-9; ++i) betas.push_back(i * cfg.delta_beta);
    betas.push_back(1.0);

    for (size_t bi = 0; bi < betas.size(); ++bi) {
        double beta = betas[bi];
        uint64_t seed_b = derive_seed(cfg.seed, bi);
        GroupPartition part = make_partition(cover, cfg.order, beta);
        double k1 = std::floor(payload_bits * (1.0 - beta) + 0.5);
        double k2 = payload_bits - k1;

        ElementGrid masked1 = cover;
        std::fill(masked1.usable_mask.begin(), masked1.usable_mask.end(), uint8_t(0));
        for (int idx : part.common())
            if (cover.usable_mask[size_t(idx)]) masked1.usable_mask[size_t(idx)] = 1;
        ElementGrid zc = k1 > 0 ? simulate_embedding(masked1, base, k1, derive_seed(seed_b, 1))
                                : masked1;
        zc.usable_mask = cover.usable_mask;

        ElementGrid z = zc;
        if (k2 > 0 && part.l1 < int(part.order.size())) {
            GradientMap grad = cnn::input_gradient(model, zc, 0);
            AdjustMode mode = cfg.mode == AmaConfig::Mode::same_sign ? AdjustMode::same_sign
                                                                     : AdjustMode::inverse_sign;
            CostMap adj = adjust_costs(base, grad, cfg.alpha, mode, part.adjustable());
            ElementGrid masked2 = zc;
            std::fill(masked2.usable_mask.begin(), masked2.usable_mask.end(), uint8_t(0));
            for (int idx : part.adjustable())
                if (cover.usable_mask[size_t(idx)]) masked2.usable_mask[size_t(idx)] = 1;
            z = simulate_embedding(masked2, adj, k2, derive_seed(seed_b, 2));
            z.usable_mask = cover.usable_mask;
        }
        if (cnn::classify(model, z) == 0) return {beta, true};
    }
    return {betas.back(), false};
}

}  // namespace stegama::testsupport
