// Command-line front end: cover generation, classifier training, embedding
// and extraction, evaluation, and the experiment pipelines.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 infeasibility or
// non-convergence.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "stegama/bench.hpp"

namespace fs = std::filesystem;
using namespace stegama;

namespace {

std::vector<std::string> list_pgms(const std::string& dir) {
    if (!fs::is_directory(dir)) fail_data("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) fail_data("no .pgm files in " + dir);
    return files;
}

std::vector<ElementGrid> load_dir(const std::string& dir) {
    std::vector<ElementGrid> grids;
    for (const std::string& f : list_pgms(dir)) grids.push_back(load_pgm(read_file(f)));
    return grids;
}

// paired loading: cover/stego sets are matched by sorted file order
void load_pairs(const std::string& cover_dir, const std::string& stego_dir,
                std::vector<ElementGrid>& covers, std::vector<ElementGrid>& stegos) {
    covers = load_dir(cover_dir);
    stegos = load_dir(stego_dir);
    if (covers.size() != stegos.size())
        fail_data("cover and stego directories hold different image counts");
}

std::string ensemble_encode(const FldEnsemble& e) {
    std::string out = "AFE1";
    put_u32le(out, uint32_t(e.dim));
    put_u32le(out, uint32_t(e.learners.size()));
    for (int i = 0; i < 8; ++i) out.push_back(char((e.seed >> (8 * i)) & 0xff));
    for (const FldLearner& L : e.learners) {
        put_u32le(out, uint32_t(L.coords.size()));
        for (int c : L.coords) put_u32le(out, uint32_t(c));
        for (double w : L.w) put_f64le(out, w);
        put_f64le(out, L.b);
    }
    return out;
}

FldEnsemble ensemble_decode(const std::string& b) {
    if (b.size() < 20 || b.compare(0, 4, "AFE1") != 0) fail_data("ensemble file: bad magic");
    const uint8_t* p = reinterpret_cast<const uint8_t*>(b.data());
    FldEnsemble e;
    e.dim = int(get_u32le(p + 4));
    uint32_t nl = get_u32le(p + 8);
    e.seed = 0;
    for (int i = 0; i < 8; ++i) e.seed |= uint64_t(p[12 + i]) << (8 * i);
    size_t off = 20;
    auto need = [&](size_t n) {
        if (off + n > b.size()) fail_data("ensemble file: truncated");
    };
    for (uint32_t l = 0; l < nl; ++l) {
        need(4);
        uint32_t d = get_u32le(p + off);
        off += 4;
        FldLearner L;
        need(size_t(d) * 12 + 8);
        for (uint32_t k = 0; k < d; ++k) {
            L.coords.push_back(int(get_u32le(p + off)));
            off += 4;
        }
        for (uint32_t k = 0; k < d; ++k) {
            L.w.push_back(get_f64le(p + off));
            off += 8;
        }
        L.b = get_f64le(p + off);
        off += 8;
        e.learners.push_back(std::move(L));
    }
    if (off != b.size()) fail_data("ensemble file: trailing bytes");
    return e;
}

BitVec bits_from_bytes(const std::string& bytes, size_t nbits) {
    if (nbits > bytes.size() * 8) fail_data("message file shorter than the requested bit count");
    BitVec v(nbits);
    for (size_t i = 0; i < nbits; ++i) v[i] = (uint8_t(bytes[i / 8]) >> (7 - i % 8)) & 1;
    return v;
}

std::string bytes_from_bits(const BitVec& bits) {
    std::string out((bits.size() + 7) / 8, '\0');
    for (size_t i = 0; i < bits.size(); ++i)
        if (bits[i] & 1) out[i / 8] = char(uint8_t(out[i / 8]) | (0x80u >> (i % 8)));
    return out;
}

bench::Config load_config(const std::string& path, uint64_t seed_override, int threads_override) {
    bench::Config c;
    if (!path.empty()) c = bench::config_from_text(read_file(path));
    if (seed_override) c.seed = seed_override;
    if (threads_override) c.threads = threads_override;
    return c;
}

void write_reports(const std::string& outdir, const bench::Config& cfg,
                   const std::vector<std::pair<std::string, std::string>>& files) {
    fs::create_directories(outdir);
    for (const auto& [name, bytes] : files) write_file((fs::path(outdir) / name).string(), bytes);
    write_file((fs::path(outdir) / "manifest.json").string(), bench::run_manifest(cfg));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial minimum-alteration steganography toolkit"};
    app.require_subcommand(1);

    // ---- gen-covers ----
    auto* gen = app.add_subcommand("gen-covers", "generate synthetic PGM covers");
    int g_count = 100, g_h = 64, g_w = 64;
    uint64_t g_seed = 1;
    double g_smooth = 24.0;
    std::string g_out = "covers";
    gen->add_option("--count", g_count);
    gen->add_option("--height", g_h);
    gen->add_option("--width", g_w);
    gen->add_option("--seed", g_seed);
    gen->add_option("--smoothness", g_smooth);
    gen->add_option("--out", g_out)->required();

    // ---- train-cnn ----
    auto* tcnn = app.add_subcommand("train-cnn", "train the targeted steganalyzer");
    std::string tc_covers, tc_stegos, tc_out = "model.acn";
    int tc_iters = 2000, tc_batch = 32, tc_threads = 0;
    double tc_lr = 0.001, tc_mom = 0.9;
    bool tc_plain = false;
    uint64_t tc_seed = 1;
    tcnn->add_option("--covers", tc_covers)->required();
    tcnn->add_option("--stegos", tc_stegos)->required();
    tcnn->add_option("--out", tc_out);
    tcnn->add_option("--iterations", tc_iters);
    tcnn->add_option("--batch", tc_batch);
    tcnn->add_option("--learning-rate", tc_lr);
    tcnn->add_option("--momentum", tc_mom);
    tcnn->add_flag("--plain-steps", tc_plain, "classic momentum steps instead of normalized");
    tcnn->add_option("--seed", tc_seed);
    tcnn->add_option("--threads", tc_threads);

    // ---- train-ensemble ----
    auto* tfld = app.add_subcommand("train-ensemble", "train the feature steganalyzer");
    std::string tf_covers, tf_stegos, tf_out = "ensemble.afe";
    int tf_learners = 51, tf_subspace = 100, tf_threads = 0;
    uint64_t tf_seed = 1;
    tfld->add_option("--covers", tf_covers)->required();
    tfld->add_option("--stegos", tf_stegos)->required();
    tfld->add_option("--out", tf_out);
    tfld->add_option("--learners", tf_learners);
    tfld->add_option("--subspace", tf_subspace);
    tfld->add_option("--seed", tf_seed);
    tfld->add_option("--threads", tf_threads);

    // ---- embed ----
    auto* emb = app.add_subcommand("embed", "embed a payload into one cover");
    std::string e_cover, e_out = "stego.pgm", e_scheme = "ama", e_mode = "inverse-sign";
    std::string e_coder = "simulator", e_model, e_msg_file, e_result, e_stc = "";
    double e_payload = 0.4, e_alpha = 2.0, e_dbeta = 0.1, e_beta0 = 0.0;
    uint64_t e_key = 0, e_seed = 1;
    emb->add_option("--cover", e_cover)->required();
    emb->add_option("--out", e_out);
    emb->add_option("--scheme", e_scheme)->check(CLI::IsMember({"baseline", "ama"}));
    emb->add_option("--payload", e_payload, "bits per usable element");
    emb->add_option("--mode", e_mode)
        ->check(CLI::IsMember({"inverse-sign", "same-sign", "fixed-beta"}));
    emb->add_option("--beta0", e_beta0, "fixed beta value for --mode fixed-beta");
    emb->add_option("--coder", e_coder)->check(CLI::IsMember({"simulator", "stc"}));
    emb->add_option("--alpha", e_alpha);
    emb->add_option("--delta-beta", e_dbeta);
    emb->add_option("--key", e_key, "embedding-order key (0: raster order)");
    emb->add_option("--seed", e_seed);
    emb->add_option("--model", e_model, "targeted model (.acn), required for ama");
    emb->add_option("--message", e_msg_file, "message file, required for the stc coder");
    emb->add_option("--stc-params", e_stc, "h=<int>;cols=<hex,...>;rate=<k>/<n>");
    emb->add_option("--result", e_result, "write the embedding record as JSON");

    // ---- extract ----
    auto* ext = app.add_subcommand("extract", "extract a message from a stego image");
    std::string x_stego, x_out = "message.bin", x_stc = "";
    uint64_t x_key = 0;
    size_t x_bits = 0;
    ext->add_option("--stego", x_stego)->required();
    ext->add_option("--bits", x_bits)->required();
    ext->add_option("--key", x_key);
    ext->add_option("--stc-params", x_stc);
    ext->add_option("--out", x_out);

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "score a classifier on cover/stego sets");
    std::string v_cnn, v_ens, v_covers, v_stegos, v_out;
    int v_threads = 0;
    ev->add_option("--cnn", v_cnn, "targeted model file");
    ev->add_option("--ensemble", v_ens, "feature ensemble file");
    ev->add_option("--covers", v_covers)->required();
    ev->add_option("--stegos", v_stegos)->required();
    ev->add_option("--out", v_out, "write a one-row CSV");
    ev->add_option("--threads", v_threads);

    // ---- game / ablate / stats ----
    std::string p_config, p_out = "reports";
    uint64_t p_seed = 0;
    int p_rounds = 0, p_threads = 0;
    auto add_pipeline_opts = [&](CLI::App* sub) {
        sub->add_option("--config", p_config, "key=value config file");
        sub->add_option("--out", p_out, "report directory");
        sub->add_option("--seed", p_seed, "override the config seed");
        sub->add_option("--threads", p_threads);
    };
    auto* game = app.add_subcommand("game", "iterative steganographer/steganalyst game");
    game->add_option("--rounds", p_rounds, "number of rounds (default from config)");
    add_pipeline_opts(game);
    auto* abl = app.add_subcommand("ablate", "case ablations at the focus payload");
    add_pipeline_opts(abl);
    auto* st = app.add_subcommand("stats", "beta/modification/mmd statistics");
    add_pipeline_opts(st);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            fs::create_directories(g_out);
            for (int i = 0; i < g_count; ++i) {
                ElementGrid g = synth_cover(g_h, g_w, derive_seed(g_seed, uint64_t(i)), g_smooth);
                char name[32];
                std::snprintf(name, sizeof name, "cover_%05d.pgm", i);
                write_file((fs::path(g_out) / name).string(), save_pgm(g));
            }
            std::printf("wrote %d covers to %s\n", g_count, g_out.c_str());
        } else if (*tcnn) {
            std::vector<ElementGrid> covers, stegos;
            load_pairs(tc_covers, tc_stegos, covers, stegos);
            std::vector<const ElementGrid*> cp, sp;
            for (auto& c : covers) cp.push_back(&c);
            for (auto& s : stegos) sp.push_back(&s);
            cnn::TrainParams hp;
            hp.learning_rate = tc_lr;
            hp.momentum = tc_mom;
            hp.batch_size = tc_batch;
            hp.iterations = tc_iters;
            hp.optimizer = tc_plain ? cnn::TrainParams::Optimizer::momentum
                                    : cnn::TrainParams::Optimizer::normalized_momentum;
            hp.threads = tc_threads;
            cnn::Model m = cnn::train(cp, sp, hp, tc_seed);
            write_file(tc_out, cnn::encode_model(m));
            std::printf("model %s digest %016llx\n", tc_out.c_str(),
                        (unsigned long long)cnn::model_digest(m));
        } else if (*tfld) {
            std::vector<ElementGrid> covers, stegos;
            load_pairs(tf_covers, tf_stegos, covers, stegos);
            std::vector<const ElementGrid*> cp, sp;
            for (auto& c : covers) cp.push_back(&c);
            for (auto& s : stegos) sp.push_back(&s);
            std::vector<FeatureVector> fc = bench::features_of(cp, tf_threads);
            std::vector<FeatureVector> fs_ = bench::features_of(sp, tf_threads);
            FldEnsemble e = train_fld(fc, fs_, tf_subspace, tf_learners, tf_seed);
            write_file(tf_out, ensemble_encode(e));
            std::printf("ensemble %s (%d learners, dim %d)\n", tf_out.c_str(),
                        int(e.learners.size()), e.dim);
        } else if (*emb) {
            ElementGrid cover = load_pgm(read_file(e_cover));
            AmaConfig cfg;
            cfg.alpha = e_alpha;
            cfg.delta_beta = e_dbeta;
            cfg.mode = e_mode == "same-sign" ? AmaConfig::Mode::same_sign
                       : e_mode == "fixed-beta" ? AmaConfig::Mode::fixed_beta
                                                : AmaConfig::Mode::inverse_sign;
            cfg.beta0 = e_beta0;
            cfg.coder = e_coder == "stc" ? AmaConfig::Coder::stc : AmaConfig::Coder::simulator;
            cfg.order = e_key ? OrderSpec{OrderKind::keyed, e_key}
                              : OrderSpec{OrderKind::fixed_raster, 0};
            cfg.seed = e_seed;
            if (!e_stc.empty()) cfg.stc = parse_stc_params(e_stc);

            double payload_bits = e_payload * cover.usable_count();
            if (cfg.coder == AmaConfig::Coder::stc) {
                if (e_msg_file.empty()) fail_config("stc coder needs --message");
                std::string msg = read_file(e_msg_file);
                cfg.message = bits_from_bytes(msg, msg.size() * 8);
                payload_bits = double(cfg.message.size());
            }

            if (e_scheme == "baseline") {
                ElementGrid stego = conventional_embed(cover, payload_bits, baseline_costs, cfg, e_seed);
                write_file(e_out, save_pgm(stego));
                std::printf("baseline stego -> %s (%d changes)\n", e_out.c_str(),
                            diff(cover, stego).change_count());
            } else {
                if (e_model.empty()) fail_config("ama needs --model");
                cnn::Model model = cnn::decode_model(read_file(e_model));
                AmaResult r = ama_embed(cover, payload_bits, baseline_costs, model, cfg);
                write_file(e_out, save_pgm(r.stego));
                std::string record = ama_result_json(r);
                if (!e_result.empty()) write_file(e_result, record + "\n");
                std::printf("%s\n", record.c_str());
            }
        } else if (*ext) {
            ElementGrid stego = load_pgm(read_file(x_stego));
            StcParams params = x_stc.empty() ? StcParams{} : parse_stc_params(x_stc);
            OrderSpec spec = x_key ? OrderSpec{OrderKind::keyed, x_key}
                                   : OrderSpec{OrderKind::fixed_raster, 0};
            std::vector<int> order = embedding_order(stego, spec);
            BitVec bits = stc_extract(stego, params, order, x_bits);
            write_file(x_out, bytes_from_bits(bits));
            std::printf("extracted %zu bits -> %s\n", bits.size(), x_out.c_str());
        } else if (*ev) {
            std::vector<ElementGrid> covers, stegos;
            load_pairs(v_covers, v_stegos, covers, stegos);
            bench::Classifier clf;
            cnn::Model model;
            FldEnsemble ensemble;
            std::string name;
            if (!v_cnn.empty()) {
                model = cnn::decode_model(read_file(v_cnn));
                clf = [&model](const ElementGrid& g) { return cnn::classify(model, g); };
                name = "cnn";
            } else if (!v_ens.empty()) {
                ensemble = ensemble_decode(read_file(v_ens));
                clf = [&ensemble](const ElementGrid& g) {
                    return classify_ensemble(ensemble, extract_features(g));
                };
                name = "fld";
            } else {
                fail_config("evaluate needs --cnn or --ensemble");
            }
            bench::MetricsRecord m = bench::evaluate(clf, covers, stegos, v_threads);
            std::vector<bench::ReportRow> rows{{"unknown", 0.0, name, m}};
            std::string csv = bench::rows_to_csv(rows);
            if (!v_out.empty()) write_file(v_out, csv);
            std::printf("p_fa=%g p_md=%g p_e=%g (n=%d)\n", m.p_fa, m.p_md, m.p_e, m.n_cover);
        } else if (*game) {
            bench::Config cfg = load_config(p_config, p_seed, p_threads);
            int rounds = p_rounds > 0 ? p_rounds : cfg.rounds;
            bench::Dataset data = bench::make_dataset(cfg);
            bench::GameOutcome out = bench::run_game(rounds, data, cfg);
            write_reports(p_out, cfg, {{"game.csv", bench::rows_to_csv(out.rows)}});
            std::printf("%s", bench::rows_to_csv(out.rows).c_str());
        } else if (*abl) {
            bench::Config cfg = load_config(p_config, p_seed, p_threads);
            bench::Dataset data = bench::make_dataset(cfg);
            bench::AblationOutcome out = bench::run_ablations(data, cfg);
            write_reports(p_out, cfg, {{"ablations.csv", bench::rows_to_csv(out.rows)}});
            std::printf("%s", bench::rows_to_csv(out.rows).c_str());
        } else if (*st) {
            bench::Config cfg = load_config(p_config, p_seed, p_threads);
            bench::Config one = cfg;
            one.payloads = {cfg.focus_payload};
            bench::Dataset data = bench::make_dataset(one);
            bench::UnawareOutcome u = bench::run_unaware(data, one);
            std::vector<ElementGrid> covers = data.copy(data.split.c1tst);
            bench::StatsReport rep = bench::stats(u.per_payload[0].ama_tst.results, covers,
                                                  u.per_payload[0].conv_tst, one);
            write_reports(p_out, cfg,
                          {{"stats.csv", rep.csv()}, {"unaware.csv", bench::rows_to_csv(u.rows)}});
            std::printf("%s", rep.csv().c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return int(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
