// Experiment harness: detection metrics, dataset splits, the
// adversary-unaware / adversary-aware evaluations, the iterative game, the
// ablation runs, summary statistics, and deterministic CSV/manifest output.
#pragma once

#include <map>
#include <sstream>

#include "stegama/ama.hpp"
#include "stegama/features.hpp"

namespace stegama::bench {

constexpr const char* kVersion = "0.1.0";

// --------------------------------------------------------------------------
// Metrics
// --------------------------------------------------------------------------

struct MetricsRecord {
    double p_fa = 0, p_md = 0, p_e = 0;
    int n_cover = 0, n_stego = 0;

    static MetricsRecord from_rates(double p_md, double p_fa, int n_cover = 0, int n_stego = 0) {
        return {p_fa, p_md, (p_md + p_fa) / 2.0, n_cover, n_stego};
    }
};

using Classifier = std::function<int(const ElementGrid&)>;

inline MetricsRecord evaluate(const Classifier& classify, const std::vector<ElementGrid>& covers,
                              const std::vector<ElementGrid>& stegos, int threads = 0) {
    if (covers.empty() || stegos.empty()) fail_data("evaluate: empty evaluation set");
    std::vector<uint8_t> cl_c(covers.size()), cl_s(stegos.size());
    cnn::parallel_for(covers.size(), threads, [&](size_t i) { cl_c[i] = uint8_t(classify(covers[i])); });
    cnn::parallel_for(stegos.size(), threads, [&](size_t i) { cl_s[i] = uint8_t(classify(stegos[i])); });
    int fa = 0, md = 0;
    for (uint8_t c : cl_c) fa += c == 1;
    for (uint8_t s : cl_s) md += s == 0;
    return MetricsRecord::from_rates(double(md) / double(stegos.size()),
                                     double(fa) / double(covers.size()), int(covers.size()),
                                     int(stegos.size()));
}

// --------------------------------------------------------------------------
// Splits
// --------------------------------------------------------------------------

struct SplitPlan {
    std::vector<int> c0, c1trn, c1tst;

    void validate(size_t pool_size) const {
        std::vector<uint8_t> seen(pool_size, 0);
        auto visit = [&](const std::vector<int>& part) {
            for (int k : part) {
                if (k < 0 || size_t(k) >= pool_size) fail_data("split: index out of range");
                if (seen[size_t(k)]++) fail_data("split: overlapping subsets");
            }
        };
        visit(c0);
        visit(c1trn);
        visit(c1tst);
    }
};

inline SplitPlan make_split(int pool_size, int n0, int n1trn, int n1tst, uint64_t seed) {
    if (n0 + n1trn + n1tst > pool_size) fail_config("split: subset sizes exceed the pool");
    std::vector<int> idx(static_cast<size_t>(pool_size));
    for (int i = 0; i < pool_size; ++i) idx[size_t(i)] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    SplitPlan s;
    s.c0.assign(idx.begin(), idx.begin() + n0);
    s.c1trn.assign(idx.begin() + n0, idx.begin() + n0 + n1trn);
    s.c1tst.assign(idx.begin() + n0 + n1trn, idx.begin() + n0 + n1trn + n1tst);
    s.validate(size_t(pool_size));
    return s;
}

// --------------------------------------------------------------------------
// Config: line-oriented key=value text, CLI flags override.
// --------------------------------------------------------------------------

struct Config {
    int covers = 2000;
    int cover_h = 64, cover_w = 64;
    double cover_smoothness = 24.0;
    int n_c0 = 1000, n_c1trn = 500, n_c1tst = 500;

    std::vector<double> payloads{0.1, 0.2, 0.3, 0.4, 0.5};  // bits per usable element
    double focus_payload = 0.4;  // game, ablations, stats

    double alpha = 2.0;
    double delta_beta = 0.1;
    bool fixed_order = false;  // raster embedding order instead of per-image keys

    int cnn_iterations = 2000;
    int cnn_batch = 32;
    double cnn_learning_rate = 0.001;
    double cnn_momentum = 0.9;
    bool cnn_normalized_steps = true;  // per-tensor step normalization
    bool cnn_calibrate_init = true;    // center/rescale layers on a calibration batch

    int fld_learners = 51;
    int fld_subspace = 100;

    int rounds = 5;
    bool aware_ablations = false;  // also retrain aware models per ablation case

    uint64_t seed = 1;
    int threads = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail_config("config: bad numeric value for " + key + ": " + v);
    }
}

inline int64_t parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        int64_t d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        fail_config("config: bad integer value for " + key + ": " + v);
    }
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail_config("config: bad boolean value for " + key + ": " + v);
}

inline std::string format_double(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace detail

inline void config_set(Config& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;
    if (key == "covers") c.covers = int(parse_int(value, key));
    else if (key == "cover_h") c.cover_h = int(parse_int(value, key));
    else if (key == "cover_w") c.cover_w = int(parse_int(value, key));
    else if (key == "cover_smoothness") c.cover_smoothness = parse_double(value, key);
    else if (key == "n_c0") c.n_c0 = int(parse_int(value, key));
    else if (key == "n_c1trn") c.n_c1trn = int(parse_int(value, key));
    else if (key == "n_c1tst") c.n_c1tst = int(parse_int(value, key));
    else if (key == "payloads") {
        c.payloads.clear();
        std::stringstream ss(value);
        std::string tok;
        while (std::getline(ss, tok, ',')) c.payloads.push_back(parse_double(detail::trim(tok), key));
        if (c.payloads.empty()) fail_config("config: payloads cannot be empty");
    } else if (key == "focus_payload") c.focus_payload = parse_double(value, key);
    else if (key == "alpha") c.alpha = parse_double(value, key);
    else if (key == "delta_beta") c.delta_beta = parse_double(value, key);
    else if (key == "fixed_order") c.fixed_order = parse_bool(value, key);
    else if (key == "cnn_iterations") c.cnn_iterations = int(parse_int(value, key));
    else if (key == "cnn_batch") c.cnn_batch = int(parse_int(value, key));
    else if (key == "cnn_learning_rate") c.cnn_learning_rate = parse_double(value, key);
    else if (key == "cnn_momentum") c.cnn_momentum = parse_double(value, key);
    else if (key == "cnn_normalized_steps") c.cnn_normalized_steps = parse_bool(value, key);
    else if (key == "cnn_calibrate_init") c.cnn_calibrate_init = parse_bool(value, key);
    else if (key == "fld_learners") c.fld_learners = int(parse_int(value, key));
    else if (key == "fld_subspace") c.fld_subspace = int(parse_int(value, key));
    else if (key == "rounds") c.rounds = int(parse_int(value, key));
    else if (key == "aware_ablations") c.aware_ablations = parse_bool(value, key);
    else if (key == "seed") c.seed = uint64_t(parse_int(value, key));
    else if (key == "threads") c.threads = int(parse_int(value, key));
    else fail_config("config: unknown key: " + key);
}

inline Config config_from_text(const std::string& text) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) fail_config("config: expected key=value, got: " + t);
        config_set(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return c;
}

inline std::string config_to_text(const Config& c) {
    using detail::format_double;
    std::string s;
    s += "covers=" + std::to_string(c.covers) + "\n";
    s += "cover_h=" + std::to_string(c.cover_h) + "\n";
    s += "cover_w=" + std::to_string(c.cover_w) + "\n";
    s += "cover_smoothness=" + format_double(c.cover_smoothness) + "\n";
    s += "n_c0=" + std::to_string(c.n_c0) + "\n";
    s += "n_c1trn=" + std::to_string(c.n_c1trn) + "\n";
    s += "n_c1tst=" + std::to_string(c.n_c1tst) + "\n";
    s += "payloads=";
    for (size_t i = 0; i < c.payloads.size(); ++i)
        s += (i ? "," : "") + format_double(c.payloads[i]);
    s += "\n";
    s += "focus_payload=" + format_double(c.focus_payload) + "\n";
    s += "alpha=" + format_double(c.alpha) + "\n";
    s += "delta_beta=" + format_double(c.delta_beta) + "\n";
    s += std::string("fixed_order=") + (c.fixed_order ? "true" : "false") + "\n";
    s += "cnn_iterations=" + std::to_string(c.cnn_iterations) + "\n";
    s += "cnn_batch=" + std::to_string(c.cnn_batch) + "\n";
    s += "cnn_learning_rate=" + format_double(c.cnn_learning_rate) + "\n";
    s += "cnn_momentum=" + format_double(c.cnn_momentum) + "\n";
    s += std::string("cnn_normalized_steps=") + (c.cnn_normalized_steps ? "true" : "false") + "\n";
    s += std::string("cnn_calibrate_init=") + (c.cnn_calibrate_init ? "true" : "false") + "\n";
    s += "fld_learners=" + std::to_string(c.fld_learners) + "\n";
    s += "fld_subspace=" + std::to_string(c.fld_subspace) + "\n";
    s += "rounds=" + std::to_string(c.rounds) + "\n";
    s += std::string("aware_ablations=") + (c.aware_ablations ? "true" : "false") + "\n";
    s += "seed=" + std::to_string(c.seed) + "\n";
    s += "threads=" + std::to_string(c.threads) + "\n";
    return s;
}

// {seed, config hash, version}
inline std::string run_manifest(const Config& c) {
    std::string cfg = config_to_text(c);
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  (unsigned long long)fnv1a64(cfg.data(), cfg.size()));
    return std::string("{\"seed\":") + std::to_string(c.seed) + ",\"config_hash\":\"" + hash +
           "\",\"version\":\"" + kVersion + "\"}\n";
}

// --------------------------------------------------------------------------
// Dataset and derived-seed streams. Every randomized stage pulls from its own
// named stream so that runs are reproducible and stages are independent.
// --------------------------------------------------------------------------

enum SeedTag : uint64_t {
    kSeedCovers = 1,
    kSeedSplit = 2,
    kSeedConvS0 = 3,
    kSeedConvS1trn = 4,
    kSeedConvS1tst = 5,
    kSeedAmaZ1trn = 6,
    kSeedAmaZ1tst = 7,
    kSeedTrainCnn0 = 8,
    kSeedTrainFld0 = 9,
    kSeedTrainCnnAware = 10,
    kSeedTrainFldAware = 11,
    kSeedOrderKeys = 12,
    kSeedGameZ0 = 13,
    kSeedAblation = 14,
};

inline uint64_t stream(uint64_t seed, uint64_t tag, uint64_t sub) {
    return derive_seed(derive_seed(seed, tag), sub);
}

struct Dataset {
    std::vector<ElementGrid> pool;
    SplitPlan split;

    std::vector<const ElementGrid*> view(const std::vector<int>& idx) const {
        std::vector<const ElementGrid*> v;
        v.reserve(idx.size());
        for (int k : idx) v.push_back(&pool[size_t(k)]);
        return v;
    }
    std::vector<ElementGrid> copy(const std::vector<int>& idx) const {
        std::vector<ElementGrid> v;
        v.reserve(idx.size());
        for (int k : idx) v.push_back(pool[size_t(k)]);
        return v;
    }
};

inline Dataset make_dataset(const Config& c) {
    Dataset d;
    d.pool.resize(size_t(c.covers));
    cnn::parallel_for(size_t(c.covers), c.threads, [&](size_t i) {
        d.pool[i] = synth_cover(c.cover_h, c.cover_w, stream(c.seed, kSeedCovers, i),
                                c.cover_smoothness);
    });
    d.split = make_split(c.covers, c.n_c0, c.n_c1trn, c.n_c1tst, derive_seed(c.seed, kSeedSplit));
    return d;
}

// --------------------------------------------------------------------------
// Stego set generation
// --------------------------------------------------------------------------

inline OrderSpec order_for(const Config& c, uint64_t image_sub) {
    if (c.fixed_order) return {OrderKind::fixed_raster, 0};
    return {OrderKind::keyed, stream(c.seed, kSeedOrderKeys, image_sub)};
}

inline std::vector<ElementGrid> conventional_set(const std::vector<const ElementGrid*>& covers,
                                                 double rate, const Config& c, uint64_t tag,
                                                 uint64_t payload_idx) {
    std::vector<ElementGrid> out(covers.size());
    uint64_t base = stream(c.seed, tag, payload_idx);
    cnn::parallel_for(covers.size(), c.threads, [&](size_t i) {
        const ElementGrid& cov = *covers[i];
        CostMap cost = baseline_costs(cov);
        out[i] = simulate_embedding(cov, cost, rate * cov.usable_count(), derive_seed(base, i));
    });
    return out;
}

struct AmaSet {
    std::vector<AmaResult> results;

    std::vector<ElementGrid> stegos() const {
        std::vector<ElementGrid> v;
        v.reserve(results.size());
        for (const AmaResult& r : results) v.push_back(r.stego);
        return v;
    }
};

inline AmaSet ama_set(const std::vector<const ElementGrid*>& covers, const cnn::Model& model,
                      double rate, const Config& c, uint64_t tag, uint64_t payload_idx,
                      AmaConfig::Mode mode = AmaConfig::Mode::inverse_sign, double beta0 = 0.0) {
    AmaSet out;
    out.results.resize(covers.size());
    uint64_t base = stream(c.seed, tag, payload_idx);
    cnn::parallel_for(covers.size(), c.threads, [&](size_t i) {
        const ElementGrid& cov = *covers[i];
        AmaConfig ac;
        ac.alpha = c.alpha;
        ac.delta_beta = c.delta_beta;
        ac.mode = mode;
        ac.beta0 = beta0;
        ac.order = order_for(c, i);
        ac.seed = derive_seed(base, i);
        out.results[i] = ama_embed(cov, rate * cov.usable_count(), baseline_costs, model, ac);
    });
    return out;
}

// --------------------------------------------------------------------------
// Classifier training wrappers
// --------------------------------------------------------------------------

inline cnn::Model train_targeted(const std::vector<const ElementGrid*>& covers,
                                 const std::vector<const ElementGrid*>& stegos, const Config& c,
                                 uint64_t seed) {
    cnn::TrainParams hp;
    hp.learning_rate = c.cnn_learning_rate;
    hp.momentum = c.cnn_momentum;
    hp.batch_size = c.cnn_batch;
    hp.iterations = c.cnn_iterations;
    hp.optimizer = c.cnn_normalized_steps ? cnn::TrainParams::Optimizer::normalized_momentum
                                          : cnn::TrainParams::Optimizer::momentum;
    hp.calibrate_init = c.cnn_calibrate_init;
    hp.threads = c.threads;
    return cnn::train(covers, stegos, hp, seed);
}

inline std::vector<FeatureVector> features_of(const std::vector<const ElementGrid*>& grids,
                                              int threads) {
    std::vector<FeatureVector> f(grids.size());
    cnn::parallel_for(grids.size(), threads, [&](size_t i) { f[i] = extract_features(*grids[i]); });
    return f;
}

inline FldEnsemble train_feature_clf(const std::vector<const ElementGrid*>& covers,
                                     const std::vector<const ElementGrid*>& stegos, const Config& c,
                                     uint64_t seed) {
    std::vector<FeatureVector> fc = features_of(covers, c.threads);
    std::vector<FeatureVector> fs = features_of(stegos, c.threads);
    return train_fld(fc, fs, c.fld_subspace, c.fld_learners, seed);
}

inline Classifier cnn_classifier(const cnn::Model& m) {
    return [&m](const ElementGrid& g) { return cnn::classify(m, g); };
}

inline Classifier fld_classifier(const FldEnsemble& e) {
    return [&e](const ElementGrid& g) { return classify_ensemble(e, extract_features(g)); };
}

// --------------------------------------------------------------------------
// Reports
// --------------------------------------------------------------------------

struct ReportRow {
    std::string scheme;       // baseline | ama | ama-case1 | ama-beta<0.x>
    double payload = 0;
    std::string steganalyzer; // cnn | fld, with -aware suffix when retrained
    MetricsRecord m;
};

inline std::string rows_to_csv(const std::vector<ReportRow>& rows) {
    using detail::format_double;
    std::string s = "scheme,payload,steganalyzer,p_fa,p_md,p_e,n\n";
    for (const ReportRow& r : rows) {
        s += r.scheme + "," + format_double(r.payload) + "," + r.steganalyzer + "," +
             format_double(r.m.p_fa) + "," + format_double(r.m.p_md) + "," +
             format_double(r.m.p_e) + "," + std::to_string(r.m.n_cover) + "\n";
    }
    return s;
}

// --------------------------------------------------------------------------
// Adversary-unaware evaluation: the steganalyzers are trained on C0 pairs
// with conventional stegos only; AMA attacks the C0-trained targeted model.
// --------------------------------------------------------------------------

struct PayloadArtifacts {
    double rate = 0;
    cnn::Model targeted;
    FldEnsemble fld;
    std::vector<ElementGrid> conv_tst;
    AmaSet ama_tst;
    MetricsRecord cnn_conv, cnn_ama, fld_conv, fld_ama;
};

struct UnawareOutcome {
    std::vector<ReportRow> rows;
    std::vector<PayloadArtifacts> per_payload;
};

inline UnawareOutcome run_unaware(const Dataset& data, const Config& c) {
    data.split.validate(data.pool.size());
    UnawareOutcome out;
    std::vector<const ElementGrid*> c0 = data.view(data.split.c0);
    std::vector<ElementGrid> c1tst = data.copy(data.split.c1tst);

    for (size_t pi = 0; pi < c.payloads.size(); ++pi) {
        PayloadArtifacts art;
        art.rate = c.payloads[pi];

        std::vector<ElementGrid> s0 = conventional_set(c0, art.rate, c, kSeedConvS0, pi);
        std::vector<const ElementGrid*> s0v;
        for (auto& g : s0) s0v.push_back(&g);
        art.targeted = train_targeted(c0, s0v, c, stream(c.seed, kSeedTrainCnn0, pi));
        art.fld = train_feature_clf(c0, s0v, c, stream(c.seed, kSeedTrainFld0, pi));

        std::vector<const ElementGrid*> c1tstv;
        for (auto& g : c1tst) c1tstv.push_back(&g);
        art.conv_tst = conventional_set(c1tstv, art.rate, c, kSeedConvS1tst, pi);
        art.ama_tst = ama_set(c1tstv, art.targeted, art.rate, c, kSeedAmaZ1tst, pi);
        std::vector<ElementGrid> z1tst = art.ama_tst.stegos();

        art.cnn_conv = evaluate(cnn_classifier(art.targeted), c1tst, art.conv_tst, c.threads);
        art.cnn_ama = evaluate(cnn_classifier(art.targeted), c1tst, z1tst, c.threads);
        art.fld_conv = evaluate(fld_classifier(art.fld), c1tst, art.conv_tst, c.threads);
        art.fld_ama = evaluate(fld_classifier(art.fld), c1tst, z1tst, c.threads);

        // same covers, same model: the false-alarm rate cannot differ
        if (art.cnn_conv.p_fa != art.cnn_ama.p_fa || art.fld_conv.p_fa != art.fld_ama.p_fa)
            fail_data("run_unaware: false-alarm rates diverged across stego conditions");

        out.rows.push_back({"baseline", art.rate, "cnn", art.cnn_conv});
        out.rows.push_back({"ama", art.rate, "cnn", art.cnn_ama});
        out.rows.push_back({"baseline", art.rate, "fld", art.fld_conv});
        out.rows.push_back({"ama", art.rate, "fld", art.fld_ama});
        out.per_payload.push_back(std::move(art));
    }
    return out;
}

// --------------------------------------------------------------------------
// Adversary-aware evaluation: fresh steganalyzers retrained on C1trn with the
// stego kind under test; adversarial stegos still come from the C0-trained
// targeted model only.
// --------------------------------------------------------------------------

struct AwareOutcome {
    std::vector<ReportRow> rows;
};

inline AwareOutcome run_aware(const Dataset& data, const Config& c,
                              const UnawareOutcome* reuse = nullptr) {
    data.split.validate(data.pool.size());
    AwareOutcome out;
    std::vector<const ElementGrid*> c0 = data.view(data.split.c0);
    std::vector<ElementGrid> c1trn = data.copy(data.split.c1trn);
    std::vector<ElementGrid> c1tst = data.copy(data.split.c1tst);
    std::vector<const ElementGrid*> c1trnv, c1tstv;
    for (auto& g : c1trn) c1trnv.push_back(&g);
    for (auto& g : c1tst) c1tstv.push_back(&g);

    for (size_t pi = 0; pi < c.payloads.size(); ++pi) {
        double rate = c.payloads[pi];

        const cnn::Model* targeted = nullptr;
        cnn::Model trained_here;
        std::vector<ElementGrid> conv_tst;
        AmaSet ama_tst;
        if (reuse && pi < reuse->per_payload.size() && reuse->per_payload[pi].rate == rate) {
            targeted = &reuse->per_payload[pi].targeted;
            conv_tst = reuse->per_payload[pi].conv_tst;
            ama_tst = reuse->per_payload[pi].ama_tst;
        } else {
            std::vector<ElementGrid> s0 = conventional_set(c0, rate, c, kSeedConvS0, pi);
            std::vector<const ElementGrid*> s0v;
            for (auto& g : s0) s0v.push_back(&g);
            trained_here = train_targeted(c0, s0v, c, stream(c.seed, kSeedTrainCnn0, pi));
            targeted = &trained_here;
            conv_tst = conventional_set(c1tstv, rate, c, kSeedConvS1tst, pi);
            ama_tst = ama_set(c1tstv, *targeted, rate, c, kSeedAmaZ1tst, pi);
        }

        std::vector<ElementGrid> conv_trn = conventional_set(c1trnv, rate, c, kSeedConvS1trn, pi);
        AmaSet ama_trn = ama_set(c1trnv, *targeted, rate, c, kSeedAmaZ1trn, pi);
        std::vector<ElementGrid> z_trn = ama_trn.stegos();
        std::vector<ElementGrid> z_tst = ama_tst.stegos();

        std::vector<const ElementGrid*> convv, zv;
        for (auto& g : conv_trn) convv.push_back(&g);
        for (auto& g : z_trn) zv.push_back(&g);

        cnn::Model aware_conv =
            train_targeted(c1trnv, convv, c, stream(c.seed, kSeedTrainCnnAware, 2 * pi));
        cnn::Model aware_ama =
            train_targeted(c1trnv, zv, c, stream(c.seed, kSeedTrainCnnAware, 2 * pi + 1));
        FldEnsemble fld_conv =
            train_feature_clf(c1trnv, convv, c, stream(c.seed, kSeedTrainFldAware, 2 * pi));
        FldEnsemble fld_ama =
            train_feature_clf(c1trnv, zv, c, stream(c.seed, kSeedTrainFldAware, 2 * pi + 1));

        out.rows.push_back(
            {"baseline", rate, "cnn-aware", evaluate(cnn_classifier(aware_conv), c1tst, conv_tst, c.threads)});
        out.rows.push_back(
            {"ama", rate, "cnn-aware", evaluate(cnn_classifier(aware_ama), c1tst, z_tst, c.threads)});
        out.rows.push_back(
            {"baseline", rate, "fld-aware", evaluate(fld_classifier(fld_conv), c1tst, conv_tst, c.threads)});
        out.rows.push_back(
            {"ama", rate, "fld-aware", evaluate(fld_classifier(fld_ama), c1tst, z_tst, c.threads)});
    }
    return out;
}

// --------------------------------------------------------------------------
// Iterative game. Round 1 trains the unaware steganalyzer on conventional
// stegos; each later round trains it on the adversarial stegos the
// steganographer produced against the previous round's model. The aware
// steganalyzer always retrains on the current round's adversarial output,
// and both are scored on the shared C1tst pair.
// --------------------------------------------------------------------------

struct GameRound {
    int round = 0;
    MetricsRecord unaware;
    MetricsRecord aware;
};

struct GameOutcome {
    std::vector<GameRound> rounds;
    std::vector<ReportRow> rows;
};

inline GameOutcome run_game(int rounds, const Dataset& data, const Config& c) {
    if (rounds < 1) fail_config("game: need at least one round");
    data.split.validate(data.pool.size());
    GameOutcome out;
    double rate = c.focus_payload;

    std::vector<const ElementGrid*> c0 = data.view(data.split.c0);
    std::vector<ElementGrid> c1trn = data.copy(data.split.c1trn);
    std::vector<ElementGrid> c1tst = data.copy(data.split.c1tst);
    std::vector<const ElementGrid*> c1trnv, c1tstv;
    for (auto& g : c1trn) c1trnv.push_back(&g);
    for (auto& g : c1tst) c1tstv.push_back(&g);

    // round 1 unaware training set: conventional stegos on C0
    std::vector<ElementGrid> train_stegos = conventional_set(c0, rate, c, kSeedConvS0, 0);

    for (int r = 1; r <= rounds; ++r) {
        std::vector<const ElementGrid*> tsv;
        for (auto& g : train_stegos) tsv.push_back(&g);
        // streams use r-1 so that a single-payload config makes round one
        // bit-identical to run_unaware / run_aware
        uint64_t sub = uint64_t(r - 1);
        cnn::Model unaware = train_targeted(c0, tsv, c, stream(c.seed, kSeedTrainCnn0, sub));

        AmaSet z_trn = ama_set(c1trnv, unaware, rate, c, kSeedAmaZ1trn, sub);
        AmaSet z_tst = ama_set(c1tstv, unaware, rate, c, kSeedAmaZ1tst, sub);
        std::vector<ElementGrid> ztrn = z_trn.stegos(), ztst = z_tst.stegos();
        std::vector<const ElementGrid*> ztrnv;
        for (auto& g : ztrn) ztrnv.push_back(&g);
        cnn::Model aware =
            train_targeted(c1trnv, ztrnv, c, stream(c.seed, kSeedTrainCnnAware, 2 * sub + 1));

        GameRound gr;
        gr.round = r;
        gr.unaware = evaluate(cnn_classifier(unaware), c1tst, ztst, c.threads);
        gr.aware = evaluate(cnn_classifier(aware), c1tst, ztst, c.threads);
        out.rounds.push_back(gr);
        out.rows.push_back({"ama-round" + std::to_string(r), rate, "cnn", gr.unaware});
        out.rows.push_back({"ama-round" + std::to_string(r), rate, "cnn-aware", gr.aware});

        if (r < rounds) {
            // next round's unaware steganalyst sees this round's strategy on C0
            AmaSet z0 = ama_set(c0, unaware, rate, c, kSeedGameZ0, sub);
            train_stegos = z0.stegos();
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Ablations at the focus payload: Case I flips the adjustment to the gradient
// sign; Case II pins beta instead of searching for the minimum.
// --------------------------------------------------------------------------

struct AblationOutcome {
    std::vector<ReportRow> rows;
    MetricsRecord normal_unaware;  // reference row: standard inverse-sign AMA
};

inline AblationOutcome run_ablations(const Dataset& data, const Config& c,
                                     const UnawareOutcome* reuse = nullptr) {
    data.split.validate(data.pool.size());
    double rate = c.focus_payload;
    AblationOutcome out;

    std::vector<const ElementGrid*> c0 = data.view(data.split.c0);
    std::vector<ElementGrid> c1trn = data.copy(data.split.c1trn);
    std::vector<ElementGrid> c1tst = data.copy(data.split.c1tst);
    std::vector<const ElementGrid*> c1trnv, c1tstv;
    for (auto& g : c1trn) c1trnv.push_back(&g);
    for (auto& g : c1tst) c1tstv.push_back(&g);

    size_t pi = c.payloads.size();
    for (size_t i = 0; i < c.payloads.size(); ++i)
        if (c.payloads[i] == rate) pi = i;

    const cnn::Model* targeted = nullptr;
    cnn::Model trained_here;
    if (reuse && pi < reuse->per_payload.size() && reuse->per_payload[pi].rate == rate) {
        targeted = &reuse->per_payload[pi].targeted;
        out.normal_unaware = reuse->per_payload[pi].cnn_ama;
    } else {
        std::vector<ElementGrid> s0 = conventional_set(c0, rate, c, kSeedConvS0, pi);
        std::vector<const ElementGrid*> s0v;
        for (auto& g : s0) s0v.push_back(&g);
        trained_here = train_targeted(c0, s0v, c, stream(c.seed, kSeedTrainCnn0, pi));
        targeted = &trained_here;
        AmaSet normal = ama_set(c1tstv, *targeted, rate, c, kSeedAmaZ1tst, pi);
        std::vector<ElementGrid> nz = normal.stegos();
        out.normal_unaware = evaluate(cnn_classifier(*targeted), c1tst, nz, c.threads);
    }
    out.rows.push_back({"ama", rate, "cnn", out.normal_unaware});

    struct Case {
        std::string name;
        AmaConfig::Mode mode;
        double beta0;
        uint64_t sub;
    };
    std::vector<Case> cases{{"ama-case1", AmaConfig::Mode::same_sign, 0.0, 100},
                            {"ama-beta0.1", AmaConfig::Mode::fixed_beta, 0.1, 101},
                            {"ama-beta0.3", AmaConfig::Mode::fixed_beta, 0.3, 103},
                            {"ama-beta0.5", AmaConfig::Mode::fixed_beta, 0.5, 105}};

    for (const Case& cs : cases) {
        AmaSet tst = ama_set(c1tstv, *targeted, rate, c, kSeedAblation, cs.sub, cs.mode, cs.beta0);
        std::vector<ElementGrid> z = tst.stegos();
        out.rows.push_back(
            {cs.name, rate, "cnn", evaluate(cnn_classifier(*targeted), c1tst, z, c.threads)});

        if (c.aware_ablations) {
            AmaSet trn =
                ama_set(c1trnv, *targeted, rate, c, kSeedAblation, cs.sub + 50, cs.mode, cs.beta0);
            std::vector<ElementGrid> ztrn = trn.stegos();
            std::vector<const ElementGrid*> ztrnv;
            for (auto& g : ztrn) ztrnv.push_back(&g);
            cnn::Model aware =
                train_targeted(c1trnv, ztrnv, c, stream(c.seed, kSeedTrainCnnAware, cs.sub));
            out.rows.push_back(
                {cs.name, rate, "cnn-aware", evaluate(cnn_classifier(aware), c1tst, z, c.threads)});
        }
    }
    return out;
}

// --------------------------------------------------------------------------
// Summary statistics: beta frequencies (with a fail bucket), mean
// modification rates, and the MMD feature distance at a shared gamma.
// --------------------------------------------------------------------------

struct StatsReport {
    std::vector<std::pair<std::string, double>> beta_hist;  // label -> percent
    double ama_mod_rate = 0, conv_mod_rate = 0;
    double mmd_ama = 0, mmd_conv = 0;
    double gamma = 0;

    std::string csv() const {
        using detail::format_double;
        std::string s = "kind,label,value\n";
        for (const auto& [label, pct] : beta_hist) s += "beta," + label + "," + format_double(pct) + "\n";
        s += "modification_rate,baseline," + format_double(conv_mod_rate) + "\n";
        s += "modification_rate,ama," + format_double(ama_mod_rate) + "\n";
        s += "mmd,baseline," + format_double(mmd_conv) + "\n";
        s += "mmd,ama," + format_double(mmd_ama) + "\n";
        s += "mmd_gamma,," + format_double(gamma) + "\n";
        return s;
    }
};

inline StatsReport stats(const std::vector<AmaResult>& ama_results,
                         const std::vector<ElementGrid>& covers,
                         const std::vector<ElementGrid>& conv_stegos, const Config& c) {
    if (ama_results.empty() || covers.size() != conv_stegos.size() ||
        covers.size() != ama_results.size())
        fail_data("stats: result sets must be non-empty and aligned");
    StatsReport r;

    // beta frequency table over the search grid, plus the failure bucket
    std::vector<double> grid;
    for (int i = 0; i * c.delta_beta < 1.0 - 1e-9; ++i) grid.push_back(i * c.delta_beta);
    grid.push_back(1.0);
    std::vector<int> counts(grid.size(), 0);
    int fails = 0;
    for (const AmaResult& res : ama_results) {
        if (res.fallback) {
            ++fails;
            continue;
        }
        size_t best = 0;
        for (size_t k = 0; k < grid.size(); ++k)
            if (std::abs(grid[k] - res.beta_used) < std::abs(grid[best] - res.beta_used)) best = k;
        ++counts[best];
    }
    double total = double(ama_results.size());
    for (size_t k = 0; k < grid.size(); ++k) {
        // labels rounded to the grid's own precision, not raw accumulation fuzz
        double label = std::round(grid[k] * 1e6) / 1e6;
        r.beta_hist.push_back({detail::format_double(label), 100.0 * counts[k] / total});
    }
    r.beta_hist.push_back({"fail", 100.0 * fails / total});

    double ama_rate = 0, conv_rate = 0;
    for (size_t i = 0; i < covers.size(); ++i) {
        double usable = double(covers[i].usable_count());
        ama_rate += double(ama_results[i].change_count) / usable;
        conv_rate += double(diff(covers[i], conv_stegos[i]).change_count()) / usable;
    }
    r.ama_mod_rate = ama_rate / total;
    r.conv_mod_rate = conv_rate / total;

    std::vector<const ElementGrid*> cv, sv, zv;
    for (const auto& g : covers) cv.push_back(&g);
    for (const auto& g : conv_stegos) sv.push_back(&g);
    std::vector<FeatureVector> fc = features_of(cv, c.threads);
    std::vector<FeatureVector> fs = features_of(sv, c.threads);
    std::vector<FeatureVector> fz(ama_results.size());
    cnn::parallel_for(ama_results.size(), c.threads,
                      [&](size_t i) { fz[i] = extract_features(ama_results[i].stego); });

    std::vector<FeatureVector> pooled;
    pooled.insert(pooled.end(), fc.begin(), fc.end());
    pooled.insert(pooled.end(), fs.begin(), fs.end());
    pooled.insert(pooled.end(), fz.begin(), fz.end());
    r.gamma = median_gamma(pooled);  // one shared scale for both schemes
    r.mmd_conv = mmd(fc, fs, r.gamma);
    r.mmd_ama = mmd(fc, fz, r.gamma);
    return r;
}

}  // namespace stegama::bench
