// Non-targeted feature steganalysis: truncated-residual co-occurrence
// features, a random-subspace FLD ensemble, and the MMD feature distance.
#pragma once

#include <algorithm>
#include <span>

#include "stegama/cost.hpp"

namespace stegama {

// 686-D: first-order residuals truncated to [-3,3], co-occurrences of three
// consecutive residuals per direction (343 bins each for horizontal and
// vertical), opposite scan orders merged by sign symmetry into the same bins.
constexpr int kFeatureDim = 686;
constexpr int kResidualT = 3;

using FeatureVector = std::vector<double>;

inline FeatureVector extract_features(const ElementGrid& g) {
    if (g.height < 3 || g.width < 3) fail_data("extract_features: grid smaller than 3x3");
    FeatureVector f(kFeatureDim, 0.0);
    auto trunc = [](int r) { return std::clamp(r, -kResidualT, kResidualT); };
    auto bump = [&](double* hist, int a, int b, int c) {
        hist[(a + 3) * 49 + (b + 3) * 7 + (c + 3)] += 1.0;
        hist[(-c + 3) * 49 + (-b + 3) * 7 + (-a + 3)] += 1.0;  // reverse scan
    };

    double* hh = f.data();
    for (int i = 0; i < g.height; ++i)
        for (int j = 0; j + 3 < g.width; ++j) {
            int r1 = trunc(int(g.elements(i, j + 1)) - int(g.elements(i, j)));
            int r2 = trunc(int(g.elements(i, j + 2)) - int(g.elements(i, j + 1)));
            int r3 = trunc(int(g.elements(i, j + 3)) - int(g.elements(i, j + 2)));
            bump(hh, r1, r2, r3);
        }
    double* hv = f.data() + 343;
    for (int j = 0; j < g.width; ++j)
        for (int i = 0; i + 3 < g.height; ++i) {
            int r1 = trunc(int(g.elements(i + 1, j)) - int(g.elements(i, j)));
            int r2 = trunc(int(g.elements(i + 2, j)) - int(g.elements(i + 1, j)));
            int r3 = trunc(int(g.elements(i + 3, j)) - int(g.elements(i + 2, j)));
            bump(hv, r1, r2, r3);
        }
    return f;
}

// --------------------------------------------------------------------------
// FLD ensemble: L Fisher discriminants on random coordinate subspaces,
// majority vote, ties broken toward stego.
// --------------------------------------------------------------------------

struct FldLearner {
    std::vector<int> coords;
    std::vector<double> w;
    double b = 0;
};

struct FldEnsemble {
    int dim = 0;
    std::vector<FldLearner> learners;
    uint64_t seed = 0;
};

namespace detail {

// Gaussian elimination with partial pivoting; A is overwritten.
inline std::vector<double> solve_dense(std::vector<std::vector<double>>& A, std::vector<double> rhs) {
    size_t n = rhs.size();
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (A[piv][col] == 0.0) fail_data("fld: singular scatter matrix");
        std::swap(A[col], A[piv]);
        std::swap(rhs[col], rhs[piv]);
        for (size_t r = col + 1; r < n; ++r) {
            double m = A[r][col] / A[col][col];
            if (m == 0.0) continue;
            for (size_t c = col; c < n; ++c) A[r][c] -= m * A[col][c];
            rhs[r] -= m * rhs[col];
        }
    }
    std::vector<double> x(n);
    for (size_t r = n; r-- > 0;) {
        double s = rhs[r];
        for (size_t c = r + 1; c < n; ++c) s -= A[r][c] * x[c];
        x[r] = s / A[r][r];
    }
    return x;
}

}  // namespace detail

inline FldEnsemble train_fld(const std::vector<FeatureVector>& cover,
                             const std::vector<FeatureVector>& stego, int subspace_dim,
                             int learners, uint64_t seed) {
    if (cover.size() < 2 || stego.size() < 2) fail_data("fld: need at least 2 examples per class");
    int dim = int(cover[0].size());
    for (const auto& f : cover)
        if (int(f.size()) != dim) fail_data("fld: inconsistent feature dimension");
    for (const auto& f : stego)
        if (int(f.size()) != dim) fail_data("fld: inconsistent feature dimension");
    if (subspace_dim < 1 || subspace_dim > dim) fail_config("fld: subspace dim out of range");
    if (learners < 1) fail_config("fld: need at least one learner");

    FldEnsemble e;
    e.dim = dim;
    e.seed = seed;
    size_t d = size_t(subspace_dim);

    for (int l = 0; l < learners; ++l) {
        Rng rng(derive_seed(seed, uint64_t(l)));
        // partial Fisher-Yates draw of d distinct coordinates
        std::vector<int> pool(static_cast<size_t>(dim));
        for (int k = 0; k < dim; ++k) pool[size_t(k)] = k;
        FldLearner L;
        for (size_t k = 0; k < d; ++k) {
            size_t j = k + rng.below(size_t(dim) - k);
            std::swap(pool[k], pool[j]);
            L.coords.push_back(pool[k]);
        }

        auto project = [&](const FeatureVector& f) {
            std::vector<double> p(d);
            for (size_t k = 0; k < d; ++k) p[k] = f[size_t(L.coords[k])];
            return p;
        };
        auto class_stats = [&](const std::vector<FeatureVector>& set, std::vector<double>& mu,
                               std::vector<std::vector<double>>& cov) {
            mu.assign(d, 0.0);
            for (const auto& f : set)
                for (size_t k = 0; k < d; ++k) mu[k] += f[size_t(L.coords[k])];
            for (double& v : mu) v /= double(set.size());
            cov.assign(d, std::vector<double>(d, 0.0));
            for (const auto& f : set) {
                std::vector<double> p = project(f);
                for (size_t a = 0; a < d; ++a) {
                    double da = p[a] - mu[a];
                    for (size_t b = a; b < d; ++b) cov[a][b] += da * (p[b] - mu[b]);
                }
            }
            double norm = 1.0 / double(set.size() - 1);
            for (size_t a = 0; a < d; ++a)
                for (size_t b = a; b < d; ++b) {
                    cov[a][b] *= norm;
                    cov[b][a] = cov[a][b];
                }
        };

        std::vector<double> mu_c, mu_s;
        std::vector<std::vector<double>> cov_c, cov_s;
        class_stats(cover, mu_c, cov_c);
        class_stats(stego, mu_s, cov_s);

        std::vector<std::vector<double>> S(d, std::vector<double>(d));
        double trace = 0;
        for (size_t a = 0; a < d; ++a) {
            for (size_t b = 0; b < d; ++b) S[a][b] = cov_c[a][b] + cov_s[a][b];
            trace += S[a][a];
        }
        double ridge = 1e-6 * (trace / double(d));
        bool zero_gap = true;
        std::vector<double> dmu(d);
        for (size_t k = 0; k < d; ++k) {
            dmu[k] = mu_s[k] - mu_c[k];
            if (dmu[k] != 0.0) zero_gap = false;
        }
        if (ridge == 0.0 && zero_gap)
            fail_data("fld: degenerate training set (identical means, singular scatter)");
        for (size_t a = 0; a < d; ++a) S[a][a] += ridge;

        L.w = detail::solve_dense(S, dmu);
        double proj_c = 0, proj_s = 0;
        for (size_t k = 0; k < d; ++k) {
            proj_c += L.w[k] * mu_c[k];
            proj_s += L.w[k] * mu_s[k];
        }
        L.b = 0.5 * (proj_c + proj_s);
        e.learners.push_back(std::move(L));
    }
    return e;
}

inline int classify_ensemble(const FldEnsemble& e, const FeatureVector& f) {
    if (int(f.size()) != e.dim) fail_data("fld: feature dimension mismatch");
    int votes = 0;
    for (const FldLearner& L : e.learners) {
        double p = -L.b;
        for (size_t k = 0; k < L.coords.size(); ++k) p += L.w[k] * f[size_t(L.coords[k])];
        votes += p >= 0 ? 1 : -1;
    }
    return votes >= 0 ? 1 : 0;  // tie -> stego
}

// --------------------------------------------------------------------------
// MMD with a Gaussian kernel, biased (V-statistic) estimator so that
// MMD(A, A) is exactly zero.
// --------------------------------------------------------------------------

namespace detail {

inline double sqdist(const FeatureVector& a, const FeatureVector& b) {
    double s = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

}  // namespace detail

inline double mmd(const std::vector<FeatureVector>& A, const std::vector<FeatureVector>& B,
                  double gamma) {
    if (A.empty() || B.empty()) fail_data("mmd: empty feature set");
    if (!(gamma > 0)) fail_config("mmd: gamma must be positive");
    size_t dim = A[0].size();
    for (const auto& f : A)
        if (f.size() != dim) fail_data("mmd: inconsistent dimensions");
    for (const auto& f : B)
        if (f.size() != dim) fail_data("mmd: inconsistent dimensions");

    auto mean_kernel = [&](const std::vector<FeatureVector>& X, const std::vector<FeatureVector>& Y) {
        double s = 0;
        for (const auto& x : X)
            for (const auto& y : Y) s += std::exp(-gamma * detail::sqdist(x, y));
        return s / (double(X.size()) * double(Y.size()));
    };
    double m2 = mean_kernel(A, A) + mean_kernel(B, B) - 2 * mean_kernel(A, B);
    return std::sqrt(std::max(0.0, m2));
}

// Median heuristic: gamma = 1 / median of pairwise squared distances over the
// pooled set. Falls back to 1 when every point coincides.
inline double median_gamma(const std::vector<FeatureVector>& pooled) {
    std::vector<double> d2;
    for (size_t i = 0; i < pooled.size(); ++i)
        for (size_t j = i + 1; j < pooled.size(); ++j)
            d2.push_back(detail::sqdist(pooled[i], pooled[j]));
    if (d2.empty()) return 1.0;
    size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + long(mid), d2.end());
    double med = d2[mid];
    return med > 0 ? 1.0 / med : 1.0;
}

// --------------------------------------------------------------------------
// Feature matrix IO: CSV (one row per image) and the AEC1 plane format with
// height = rows, width = feature dimension.
// --------------------------------------------------------------------------

inline std::string features_to_csv(const std::vector<FeatureVector>& rows) {
    std::string out;
    char buf[40];
    for (const auto& r : rows) {
        for (size_t k = 0; k < r.size(); ++k) {
            int len = std::snprintf(buf, sizeof buf, "%.17g", r[k]);
            if (k) out.push_back(',');
            out.append(buf, size_t(len));
        }
        out.push_back('\n');
    }
    return out;
}

inline std::string encode_feature_matrix(const std::vector<FeatureVector>& rows) {
    if (rows.empty()) fail_data("feature matrix: no rows");
    MatD m(int(rows.size()), int(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) fail_data("feature matrix: ragged rows");
        for (size_t j = 0; j < rows[i].size(); ++j) m(int(i), int(j)) = rows[i][j];
    }
    const MatD* planes[1] = {&m};
    return encode_planes(planes);
}

}  // namespace stegama
