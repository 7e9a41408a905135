// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance --cli path/to/tracedr [--only name] [--planted-seed n]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "planted.hpp"
#include "support.hpp"
#include "tracedr/metrics.hpp"
#include "tracedr/pipeline.hpp"
#include "tracedr/train.hpp"

using namespace testing;

namespace {

// Pinned tolerances and budgets.
constexpr int kGradDraws = 24;
constexpr double kGradTolerance = 1e-3;
constexpr double kGradBudgetSeconds = 60.0;
constexpr int kFidelityCases = 60;
constexpr double kFidelityTolerance = 1e-9;
constexpr double kBm25Tolerance = 1e-9;
constexpr int kMetricInstances = 1000;
constexpr double kMetricTolerance = 1e-12;
constexpr int kAuditPatients = 1000;
constexpr int kQuotaPatients = 5000;
constexpr double kQuotaTolerance = 0.015;
constexpr double kAuditBudgetSeconds = 300.0;
constexpr double kPlantedMinF1 = 0.6;
constexpr double kPlantedMargin = 0.03;
constexpr double kPlantedBudgetSeconds = 900.0;
constexpr std::size_t kTopK = 5;
std::uint64_t planted_seed = 3;  // fixed for ctest; --planted-seed probes robustness

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Labels mixed_labels(const GraphView& g, std::mt19937_64& rng) {
    Labels y;
    y.entity = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.drug_nodes.size()));
    std::bernoulli_distribution coin(0.4);
    for (Eigen::Index i = 0; i < y.entity.size(); ++i) y.entity[i] = coin(rng);
    y.entity[static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(y.entity.size()))] = 1.0;
    y.evidence = y.entity;
    return y;
}

Outcome gradient_correctness() {
    const auto start = Clock::now();
    std::mt19937_64 rng(2718);
    double worst = 0.0;
    std::size_t checked = 0;
    bool complete = true;
    for (int draw = 0; draw < kGradDraws; ++draw) {
        int n = 6 + static_cast<int>(rng() % 15);
        int d = draw % 2 ? 16 : 8;
        auto g = oracle::random_graph(n, rng);
        auto x = oracle::random_matrix(n, d, 1.0 / std::sqrt(d), rng);
        auto p = oracle::random_vector(d, 1.0 / std::sqrt(d), rng);
        auto params = oracle::random_params(d, 1 + draw % 3, 1.0 / std::sqrt(d), rng);
        ModelOptions opt;
        opt.attention = draw % 5 == 4 ? AttentionMode::uniform : AttentionMode::patient;
        opt.activation = draw % 4 == 3 ? Activation::tanh : Activation::none;
        auto c = oracle::finite_difference_check(g, x, p, mixed_labels(g, rng), params, opt);
        worst = std::max(worst, c.max_rel_error);
        checked += c.checked;
        complete = complete && c.checked == params.parameter_count();
    }
    const double secs = seconds_since(start);
    return {worst <= kGradTolerance && complete && secs < kGradBudgetSeconds,
            fmt("%d draws, %zu parameters, max relative error %.2e (<= %.0e), %.1f s (< %.0f s)", kGradDraws, checked,
                worst, kGradTolerance, secs, kGradBudgetSeconds)};
}

Outcome equation_fidelity() {
    std::mt19937_64 rng(1618);
    double worst = 0.0;
    for (int t = 0; t < kFidelityCases; ++t) {
        int n = 4 + static_cast<int>(rng() % 17);
        int d = t % 2 ? 8 : 5;
        auto g = oracle::random_graph(n, rng);
        auto x = oracle::random_matrix(n, d, 1.0, rng);
        auto p = oracle::random_vector(d, 1.0, rng);
        auto params = oracle::random_params(d, 1, 0.6, rng);
        const bool uniform = t % 3 == 0;
        ModelOptions opt;
        opt.attention = uniform ? AttentionMode::uniform : AttentionMode::patient;
        Eigen::MatrixXd got = message_pass(g, x, p, params.layers[0], opt);
        Eigen::MatrixXd want = oracle::naive_message_pass(g, x, p, params.layers[0], uniform);
        worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
        auto s = score_nodes(g, got, p, params);
        auto ent = oracle::naive_type_softmax(want, g.drug_nodes, p, params.entity_head, params.entity_bias);
        auto evi = oracle::naive_type_softmax(want, g.evidence_nodes, p, params.evidence_head, params.evidence_bias);
        for (std::size_t i = 0; i < ent.size(); ++i)
            worst = std::max(worst, std::abs(s.entity_probs[static_cast<Eigen::Index>(i)] - ent[i]));
        for (std::size_t i = 0; i < evi.size(); ++i)
            worst = std::max(worst, std::abs(s.evidence_probs[static_cast<Eigen::Index>(i)] - evi[i]));
    }
    return {worst <= kFidelityTolerance,
            fmt("%d cases, max abs difference %.2e (<= %.0e)", kFidelityCases, worst, kFidelityTolerance)};
}

Outcome bm25_oracle() {
    SyntheticKgConfig cfg;
    cfg.n_drugs = 50;
    cfg.n_diseases = 20;
    cfg.scenario_fixture = false;
    auto store = synthesize_kg(cfg);
    auto index = Bm25Index::build(store);
    std::vector<std::vector<std::string>> docs;
    std::set<std::string> vocab_set;
    for (std::size_t i = 0; i < index.num_docs(); ++i) {
        docs.push_back(make_document(store.drug(index.doc_id(i)), store, index.tokenizer()).tokens);
        vocab_set.insert(docs.back().begin(), docs.back().end());
    }
    // Every vocabulary term alone, every disease label, and random mixtures.
    std::vector<std::vector<std::string>> queries;
    for (const auto& t : vocab_set) queries.push_back({t});
    for (const auto& d : store.diseases()) queries.push_back(index.tokenizer().tokenize(d.label));
    std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
    std::mt19937_64 rng(5);
    for (int q = 0; q < 50; ++q) {
        std::vector<std::string> query;
        for (int k = 0; k < 1 + q % 7; ++k) query.push_back(vocab[rng() % vocab.size()]);
        queries.push_back(query);
    }
    double worst = 0.0;
    std::size_t pairs = 0;
    for (const auto& q : queries) {
        auto scores = index.score_all(q);
        for (std::size_t d = 0; d < docs.size(); ++d, ++pairs) {
            double want = oracle::direct_bm25(q, docs, d);
            worst = std::max(worst, std::abs(scores[d] - want) / std::max(1.0, std::abs(want)));
        }
    }
    return {index.num_docs() == 50 && worst <= kBm25Tolerance,
            fmt("%zu drugs, %zu query/document pairs, max error %.2e (<= %.0e)", index.num_docs(), pairs, worst,
                kBm25Tolerance)};
}

Outcome metric_oracle() {
    std::mt19937_64 rng(31337);
    std::vector<std::string> universe;
    for (int i = 0; i < 10; ++i) universe.push_back(std::string(1, static_cast<char>('a' + i)));
    std::uniform_int_distribution<int> pick(0, 9);
    std::bernoulli_distribution coin(0.3);
    double worst = 0.0;
    int broken = 0;
    for (int t = 0; t < kMetricInstances; ++t) {
        std::vector<std::string> pred, truth{universe[pick(rng)]}, conc;
        for (int k = pick(rng); k > 0; --k) pred.push_back(universe[pick(rng)]);
        for (int k = pick(rng) / 2; k > 0; --k) truth.push_back(universe[pick(rng)]);
        for (int k = pick(rng) / 3; k > 0; --k) conc.push_back(universe[pick(rng)]);
        std::set<std::pair<std::string, std::string>> ddi;
        std::vector<DrugRecord> drugs;
        for (int a = 0; a < 10; ++a)
            for (int b = a + 1; b < 10; ++b)
                if (coin(rng) && coin(rng)) ddi.insert({universe[a], universe[b]});
        for (const auto& id : universe) {
            DrugRecord d;
            d.id = d.label = id;
            for (const auto& [x, y] : ddi)
                if (x == id) d.interactions.push_back(y);
            drugs.push_back(d);
        }
        auto store = KGStore::from_records(drugs, {}, {});
        auto got = set_metrics(pred, truth);
        auto want = oracle::enumerate_set_metrics(universe, pred, truth);
        for (auto [a, b] : {std::pair{got.jaccard, want.jaccard}, {got.precision, want.precision},
                            {got.recall, want.recall}, {got.f1, want.f1},
                            {ddi_rate(pred, conc, store), oracle::enumerate_ddi_rate(pred, conc, ddi)}})
            worst = std::max(worst, std::abs(a - b));
        const double e = kMetricTolerance;
        bool ok = got.jaccard <= std::min(got.precision, got.recall) + e &&
                  std::abs(got.f1 - 2 * got.jaccard / (1 + got.jaccard)) <= e &&
                  got.f1 >= std::min(got.precision, got.recall) - e && got.f1 <= std::max(got.precision, got.recall) + e;
        broken += !ok;
    }
    return {worst <= kMetricTolerance && broken == 0,
            fmt("%d instances, max difference %.2e (<= %.0e), %d relationship violations", kMetricInstances, worst,
                kMetricTolerance, broken)};
}

Outcome benchmark_audits() {
    const auto start = Clock::now();
    RuleApplicabilityFilter rules;

    // Both sizes share one KG: n = 5000 under the cap of two needs 2,500+
    // distinct treatable diseases.
    SyntheticKgConfig big;
    big.n_diseases = 2600;
    big.n_drugs = 5200;
    big.drugs_per_active = 10;
    auto big_store = synthesize_kg(big);

    GenConfig cfg;
    cfg.n_patients = kAuditPatients;
    LexiconSymptomGenerator lex(cfg.seed);
    auto small = generate_benchmark(cfg, big_store, rules, lex);
    const auto& r = small.report;
    bool small_ok = r.passed && r.ddi_violations.empty() && r.safe_use_violations.empty() &&
                    r.max_disease_usage <= 2 && r.split_sizes == std::array<std::size_t, 3>{600, 200, 200};

    GenConfig qcfg;
    qcfg.n_patients = kQuotaPatients;
    qcfg.quota_tolerance = kQuotaTolerance;
    auto large = generate_benchmark(qcfg, big_store, rules, lex);
    const auto& q = large.report;
    const double n = static_cast<double>(q.total);
    double worst_pp = 0.0;
    for (auto [count, target] : {std::pair{q.pregnant, 0.035}, {q.breastfeeding, 0.054}, {q.reduced_liver, 0.029},
                                 {q.reduced_renal, 0.094}, {q.allergies, 0.20}})
        worst_pp = std::max(worst_pp, std::abs(static_cast<double>(count) / n - target));
    bool large_ok = q.passed && q.quotas_audited && worst_pp <= kQuotaTolerance;

    const double secs = seconds_since(start);
    return {small_ok && large_ok && secs < kAuditBudgetSeconds,
            fmt("n=%zu: ddi %zu, safe-use %zu, max/disease %d, split %zu/%zu/%zu; n=%zu: max quota gap %.2f pp "
                "(<= %.1f), audit %s; %.0f s (< %.0f s)",
                r.total, r.ddi_violations.size(), r.safe_use_violations.size(), r.max_disease_usage,
                r.split_sizes[0], r.split_sizes[1], r.split_sizes[2], q.total, 100 * worst_pp, 100 * kQuotaTolerance,
                q.passed ? "passed" : "FAILED", secs, kAuditBudgetSeconds)};
}

/// The planted world plus the models trained on it, shared by the last criteria.
struct PlantedRun {
    PlantedWorld world;
    TrainConfig cfg;
    std::unique_ptr<HashEncoder> encoder;
    TrainResult patient, uniform;
    double patient_f1 = 0, uniform_f1 = 0, bm25_f1 = 0;
    double seconds = 0;
};

PlantedRun& planted_run() {
    static PlantedRun run = [] {
        PlantedRun r;
        const auto start = Clock::now();
        r.world = make_planted(planted_seed);
        r.cfg = TrainConfig::desk();
        r.encoder = std::make_unique<HashEncoder>(r.cfg.encoder_config());
        const auto& w = r.world;
        auto tr = prepare_all(w.bench.train, w.store, w.index, *r.encoder, r.cfg.candidates_k);
        auto dv = prepare_all(w.bench.dev, w.store, w.index, *r.encoder, r.cfg.candidates_k);
        auto te = prepare_all(w.bench.test, w.store, w.index, *r.encoder, r.cfg.candidates_k);
        r.patient = train(tr, dv, r.cfg);
        auto ucfg = r.cfg;
        ucfg.attention_mode = AttentionMode::uniform;
        r.uniform = train(tr, dv, ucfg);
        r.patient_f1 = evaluate_prepared(te, r.patient.params, r.cfg.model_options(), kTopK, &w.store).means.f1;
        r.uniform_f1 = evaluate_prepared(te, r.uniform.params, ucfg.model_options(), kTopK, &w.store).means.f1;
        r.bm25_f1 = evaluate(w.bench.test, [&](const PatientEHR& p) { return bm25_ranking(p, w.store, w.index); },
                             w.store, kTopK)
                        .means.f1;
        r.seconds = seconds_since(start);
        return r;
    }();
    return run;
}

Outcome planted_learning() {
    auto& r = planted_run();
    bool ok = r.patient_f1 >= kPlantedMinF1 && r.patient_f1 - r.bm25_f1 >= kPlantedMargin &&
              r.patient_f1 - r.uniform_f1 >= kPlantedMargin && r.seconds < kPlantedBudgetSeconds;
    return {ok, fmt("test F1@5 %.3f (>= %.1f) vs BM25 %.3f and uniform attention %.3f (margin >= %.2f), "
                    "%zu drugs / %zu diseases, %.0f s (< %.0f s)",
                    r.patient_f1, kPlantedMinF1, r.bm25_f1, r.uniform_f1, kPlantedMargin,
                    r.world.store.drugs().size(), r.world.store.diseases().size(), r.seconds, kPlantedBudgetSeconds)};
}

Outcome traceability() {
    auto& r = planted_run();
    const auto& w = r.world;
    Recommender rec(w.store, w.index, *r.encoder, r.patient.params, r.cfg.model_options(), r.cfg.candidates_k);
    std::size_t recs = 0, evidence = 0, violations = 0;
    for (const auto& p : w.bench.test) {
        auto res = rec.recommend(p, kTopK, 3);
        for (const auto& rr : res.recommendations) {
            ++recs;
            const int drug_node = *res.instance.graph.entity_node(rr.drug_id);
            const auto& adj = res.instance.view.neighbors[static_cast<std::size_t>(drug_node)];
            const std::string text = w.store.verbalize(rr.drug_id).text;
            if (rr.supporting_evidence.empty()) ++violations;
            for (const auto& e : rr.supporting_evidence) {
                ++evidence;
                const auto& node = res.instance.graph.nodes[static_cast<std::size_t>(e.node)];
                bool adjacent = std::find(adj.begin(), adj.end(), e.node) != adj.end();
                bool ok = adjacent && node.kind == NodeKind::evidence && e.drug_id == rr.drug_id && e.text == text &&
                          node.surface_text == text;
                violations += !ok;
            }
        }
    }
    return {violations == 0 && evidence > 0,
            fmt("%zu test patients, %zu recommendations, %zu evidence items, %zu violations", w.bench.test.size(),
                recs, evidence, violations)};
}

Outcome scenario_fixture() {
    auto& r = planted_run();
    const auto& w = r.world;
    Recommender rec(w.store, w.index, *r.encoder, r.patient.params, r.cfg.model_options(), r.cfg.candidates_k);
    auto [pregnant, other] = scenario_patients(w.store);
    auto rank_of = [&](const PatientEHR& p) {
        auto ranking = rec.rank(p);
        auto it = std::find(ranking.begin(), ranking.end(), std::string(kScenarioDrugId));
        return it == ranking.end() ? 0 : static_cast<int>(it - ranking.begin()) + 1;  // 0: not retrieved
    };
    const int rp = rank_of(pregnant), ro = rank_of(other);
    bool ok = (rp == 0 || rp > static_cast<int>(kTopK)) && ro >= 1 && ro <= static_cast<int>(kTopK);
    return {ok, fmt("%s rank %d for the pregnant patient (want > %zu), %d for the non-pregnant one (want <= %zu)",
                    kScenarioDrugId, rp, kTopK, ro, kTopK)};
}

Outcome config_echo(const std::string& cli) {
    TempDir dir;
    const auto log = dir / "train_log.jsonl";
    const std::string cmd = cli + " train --preset paper --dry-run --log " + log.string() + " >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "`" + cmd + "` failed"};
    std::ifstream in(log);
    std::string first;
    std::getline(in, first);
    auto j = json::parse(first, nullptr, false);
    if (j.is_discarded() || j.value("event", "") != "config") return {false, "no config event in the training log"};
    const auto& c = j["config"];
    bool ok = c["epochs"] == 5 && c["batch_size"] == 1 && c["lr"] == 1e-5 && c["warmup_steps"] == 500 &&
              c["weight_decay"] == 0.01 && c["layers"] == 3 && c["entity_weight"] == 0.7 &&
              c["evidence_weight"] == 0.3;
    return {ok, fmt("log echoes epochs %d, batch %d, lr %g, warmup %d, decay %g, layers %d, weights %g/%g",
                    c["epochs"].get<int>(), c["batch_size"].get<int>(), c["lr"].get<double>(),
                    c["warmup_steps"].get<int>(), c["weight_decay"].get<double>(), c["layers"].get<int>(),
                    c["entity_weight"].get<double>(), c["evidence_weight"].get<double>())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string cli, only;
    app.add_option("--cli", cli, "Path to the tracedr executable")->required();
    app.add_option("--only", only, "Run a single criterion");
    app.add_option("--planted-seed", planted_seed, "Seed of the planted benchmark");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient-correctness", gradient_correctness},
        {"equation-fidelity", equation_fidelity},
        {"bm25-oracle", bm25_oracle},
        {"metric-oracle", metric_oracle},
        {"benchmark-audits", benchmark_audits},
        {"planted-learning", planted_learning},
        {"traceability", traceability},
        {"scenario-fixture", scenario_fixture},
        {"config-echo", [&] { return config_echo(cli); }},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && name != only) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    return failed ? 1 : 0;
}
