#include <catch2/catch_amalgamated.hpp>

#include "stegama/bench.hpp"

using namespace stegama;
using namespace stegama::bench;

namespace {

// micro scale keeps the unit suite fast; trends are asserted at desk scale
// by the acceptance runner
Config micro_config() {
    Config c;
    c.covers = 36;
    c.cover_h = 16;
    c.cover_w = 16;
    c.n_c0 = 16;
    c.n_c1trn = 10;
    c.n_c1tst = 10;
    c.payloads = {0.4};
    c.focus_payload = 0.4;
    c.cnn_iterations = 40;
    c.cnn_batch = 8;
    c.fld_learners = 5;
    c.fld_subspace = 40;
    c.seed = 11;
    return c;
}

}  // namespace

TEST_CASE("metric records keep the total-error identity exactly", "[bench]") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        double md = rng.uniform01(), fa = rng.uniform01();
        MetricsRecord m = MetricsRecord::from_rates(md, fa);
        CHECK(m.p_e == (md + fa) / 2.0);
    }
    MetricsRecord table = MetricsRecord::from_rates(0.996, 0.175);
    CHECK(table.p_e == (0.996 + 0.175) / 2.0);
    // percent-space arithmetic, as tabulated: (17.5 + 99.6)/2 displays as 58.5
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f", (17.5 + 99.6) / 2.0);
    CHECK(std::string(buf) == "58.5");
}

TEST_CASE("evaluate counts misses and false alarms per definition", "[bench]") {
    std::vector<ElementGrid> covers, stegos;
    for (int i = 0; i < 8; ++i) {
        covers.push_back(ElementGrid(16, 16, uint8_t(i)));        // values 0..7
        stegos.push_back(ElementGrid(16, 16, uint8_t(100 + i)));  // values 100..107
    }
    Classifier threshold = [](const ElementGrid& g) { return g.elements[0] >= 100 ? 1 : 0; };
    MetricsRecord perfect = evaluate(threshold, covers, stegos);
    CHECK(perfect.p_e == 0.0);
    CHECK(perfect.n_cover == 8);

    Classifier always_stego = [](const ElementGrid&) { return 1; };
    MetricsRecord m = evaluate(always_stego, covers, stegos);
    CHECK(m.p_fa == 1.0);
    CHECK(m.p_md == 0.0);
    CHECK(m.p_e == 0.5);

    std::vector<ElementGrid> empty;
    CHECK_THROWS_AS(evaluate(threshold, empty, stegos), Error);
}

TEST_CASE("random-guess classifier lands near one half", "[bench]") {
    std::vector<ElementGrid> covers, stegos;
    for (int i = 0; i < 400; ++i) {
        covers.push_back(ElementGrid(16, 16, uint8_t(i & 0xff)));
        stegos.push_back(ElementGrid(16, 16, uint8_t((3 * i) & 0xff)));
    }
    auto rng = std::make_shared<Rng>(99);
    Classifier coin = [rng](const ElementGrid&) { return int(rng->below(2)); };
    MetricsRecord m = evaluate(coin, covers, stegos, 1);
    double sigma = std::sqrt(0.25 / 400);  // binomial on each rate
    CHECK(std::abs(m.p_e - 0.5) <= 3 * sigma);
}

TEST_CASE("splits are disjoint and validated", "[bench]") {
    SplitPlan s = make_split(100, 50, 25, 25, 3);
    CHECK(s.c0.size() == 50);
    CHECK(s.c1trn.size() == 25);
    CHECK(s.c1tst.size() == 25);
    s.validate(100);

    SplitPlan bad = s;
    bad.c1tst[0] = bad.c0[0];
    CHECK_THROWS_AS(bad.validate(100), Error);
    CHECK_THROWS_AS(make_split(10, 8, 2, 2, 1), Error);
}

TEST_CASE("config text round trips and rejects junk", "[bench]") {
    Config c;
    c.covers = 123;
    c.payloads = {0.2, 0.4};
    c.fixed_order = true;
    c.seed = 42;
    std::string text = config_to_text(c);
    Config d = config_from_text(text);
    CHECK(config_to_text(d) == text);

    Config e = config_from_text("# comment\n\ncovers = 7\npayloads = 0.1, 0.3\n");
    CHECK(e.covers == 7);
    CHECK(e.payloads == std::vector<double>{0.1, 0.3});

    CHECK_THROWS_AS(config_from_text("no_such_key=1\n"), Error);
    CHECK_THROWS_AS(config_from_text("covers\n"), Error);
    CHECK_THROWS_AS(config_from_text("covers=abc\n"), Error);
    CHECK_THROWS_AS(config_from_text("payloads=\n"), Error);

    std::string m = run_manifest(c);
    CHECK(m.find("\"seed\":42") != std::string::npos);
    CHECK(m.find("config_hash") != std::string::npos);
    CHECK(m == run_manifest(c));
}

TEST_CASE("report rows serialize deterministically", "[bench]") {
    std::vector<ReportRow> rows{{"baseline", 0.4, "cnn", MetricsRecord::from_rates(0.187, 0.175, 500, 500)},
                                {"ama", 0.4, "cnn", MetricsRecord::from_rates(0.996, 0.175, 500, 500)}};
    std::string csv = rows_to_csv(rows);
    CHECK(csv ==
          "scheme,payload,steganalyzer,p_fa,p_md,p_e,n\n"
          "baseline,0.4,cnn,0.175,0.187,0.181,500\n"
          "ama,0.4,cnn,0.175,0.996,0.5855,500\n");
    CHECK(csv == rows_to_csv(rows));
}

TEST_CASE("dataset generation is deterministic and split-sound", "[bench]") {
    Config c = micro_config();
    Dataset a = make_dataset(c);
    Dataset b = make_dataset(c);
    REQUIRE(a.pool.size() == 36);
    for (size_t i = 0; i < a.pool.size(); ++i) CHECK(a.pool[i] == b.pool[i]);
    CHECK(a.split.c0 == b.split.c0);
    a.split.validate(a.pool.size());
}

TEST_CASE("unaware run emits the expected grid of rows", "[bench]") {
    Config c = micro_config();
    Dataset d = make_dataset(c);
    UnawareOutcome u = run_unaware(d, c);
    REQUIRE(u.rows.size() == c.payloads.size() * 2 * 2);  // schemes x steganalyzers
    for (const ReportRow& r : u.rows) {
        CHECK(r.m.p_e == (r.m.p_md + r.m.p_fa) / 2.0);
        CHECK(r.m.n_cover == c.n_c1tst);
    }
    // targeted-model false alarms are identical across stego conditions
    CHECK(u.rows[0].m.p_fa == u.rows[1].m.p_fa);
    CHECK(u.rows[2].m.p_fa == u.rows[3].m.p_fa);

    // conventional stego missed detection complements the stego accuracy
    const MetricsRecord& conv = u.rows[0].m;
    int correct_stego = int(std::lround((1.0 - conv.p_md) * conv.n_stego));
    CHECK(correct_stego + int(std::lround(conv.p_md * conv.n_stego)) == conv.n_stego);

    SECTION("reports and artifacts are reproducible") {
        UnawareOutcome v = run_unaware(d, c);
        CHECK(rows_to_csv(u.rows) == rows_to_csv(v.rows));
        CHECK(cnn::model_digest(u.per_payload[0].targeted) ==
              cnn::model_digest(v.per_payload[0].targeted));
    }
}

TEST_CASE("game round one is definitionally the unaware plus aware runs", "[bench]") {
    Config c = micro_config();
    Dataset d = make_dataset(c);
    UnawareOutcome u = run_unaware(d, c);
    AwareOutcome a = run_aware(d, c, &u);
    GameOutcome g = run_game(2, d, c);

    REQUIRE(g.rounds.size() == 2);
    const MetricsRecord& unaware_ama = u.per_payload[0].cnn_ama;
    CHECK(g.rounds[0].unaware.p_md == unaware_ama.p_md);
    CHECK(g.rounds[0].unaware.p_fa == unaware_ama.p_fa);

    const MetricsRecord& aware_ama = a.rows[1].m;  // scheme ama, cnn-aware
    CHECK(g.rounds[0].aware.p_md == aware_ama.p_md);
    CHECK(g.rounds[0].aware.p_fa == aware_ama.p_fa);

    CHECK_THROWS_AS(run_game(0, d, c), Error);
}

TEST_CASE("aware run hard-fails on overlapping splits", "[bench]") {
    Config c = micro_config();
    Dataset d = make_dataset(c);
    d.split.c1tst[0] = d.split.c1trn[0];
    CHECK_THROWS_AS(run_aware(d, c), Error);
    CHECK_THROWS_AS(run_unaware(d, c), Error);
}

TEST_CASE("ablation run covers case one and the fixed-beta sweep", "[bench]") {
    Config c = micro_config();
    Dataset d = make_dataset(c);
    UnawareOutcome u = run_unaware(d, c);
    AblationOutcome ab = run_ablations(d, c, &u);
    REQUIRE(ab.rows.size() == 5);  // reference + case1 + three fixed betas
    CHECK(ab.rows[0].scheme == "ama");
    CHECK(ab.rows[1].scheme == "ama-case1");
    CHECK(ab.rows[2].scheme == "ama-beta0.1");
    CHECK(ab.rows[4].scheme == "ama-beta0.5");
    CHECK(ab.normal_unaware.p_md == u.per_payload[0].cnn_ama.p_md);
}

TEST_CASE("stats report is internally consistent", "[bench]") {
    Config c = micro_config();
    Dataset d = make_dataset(c);

    std::vector<const ElementGrid*> cv = d.view(d.split.c1tst);
    std::vector<ElementGrid> covers = d.copy(d.split.c1tst);
    std::vector<ElementGrid> conv = conventional_set(cv, 0.4, c, kSeedConvS1tst, 0);

    // synthesize ama results with a permissive model (immediate success)
    cnn::Model fooled = cnn::make_model(16, 16, 1);
    std::fill(fooled.fc_w.begin(), fooled.fc_w.end(), 0.0);
    fooled.fc_b = -1.0;
    AmaSet z = ama_set(cv, fooled, 0.4, c, kSeedAmaZ1tst, 0);

    StatsReport r = stats(z.results, covers, conv, c);
    double pct = 0;
    for (const auto& [label, p] : r.beta_hist) pct += p;
    CHECK(pct == Catch::Approx(100.0).margin(1e-9));
    CHECK(r.beta_hist.front().first == "0");
    CHECK(r.beta_hist.front().second == 100.0);  // everything succeeds at beta 0
    CHECK(r.beta_hist.back().first == "fail");
    CHECK(r.gamma > 0);
    CHECK(r.mmd_ama >= 0);
    CHECK(r.mmd_conv >= 0);
    CHECK(r.ama_mod_rate > 0);
    CHECK(r.conv_mod_rate > 0);

    std::string csv = r.csv();
    CHECK(csv.find("mmd,ama,") != std::string::npos);
    CHECK(csv == r.csv());
}
