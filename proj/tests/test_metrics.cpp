#include <doctest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "support.hpp"
#include "tracedr/errors.hpp"
#include "tracedr/metrics.hpp"

using namespace testing;

namespace {

using Strings = std::vector<std::string>;

KGStore letters_store(const std::set<std::pair<std::string, std::string>>& ddi, int n = 10) {
    std::vector<DrugRecord> drugs;
    for (int i = 0; i < n; ++i) {
        DrugRecord d;
        d.id = std::string(1, static_cast<char>('a' + i));
        d.label = d.id;
        for (const auto& [x, y] : ddi)
            if (x == d.id) d.interactions.push_back(y);
        drugs.push_back(d);
    }
    return KGStore::from_records(drugs, {}, {});
}

}  // namespace

TEST_CASE("set metric examples") {
    Strings five{"a", "b", "c", "d", "e"};
    auto same = set_metrics(five, five);
    CHECK(same.jaccard == 1.0);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    CHECK(same.f1 == 1.0);

    Strings other{"x", "y"};
    auto none = set_metrics(five, other);
    CHECK(none.jaccard == 0.0);
    CHECK(none.f1 == 0.0);

    auto m = set_metrics(five, Strings{"a", "b", "x"});
    CHECK(m.jaccard == doctest::Approx(2.0 / 6.0));
    CHECK(m.precision == doctest::Approx(0.4));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(0.5));

    CHECK(set_metrics(Strings{}, other).precision == 0.0);
    CHECK(set_metrics(Strings{"x", "x"}, other).precision == 1.0);
    CHECK_THROWS_AS(set_metrics(five, Strings{}), InvalidArgument);
}

TEST_CASE("ddi rate examples") {
    auto empty = letters_store({});
    CHECK(ddi_rate(Strings{"a", "b", "c"}, Strings{"d"}, empty) == 0.0);
    auto ab = letters_store({{"a", "b"}});
    CHECK(ddi_rate(Strings{"a"}, Strings{"b"}, ab) == 1.0);
    CHECK(ddi_rate(Strings{"a"}, Strings{}, ab) == 0.0);
    auto two = letters_store({{"a", "b"}, {"c", "d"}});
    CHECK(ddi_rate(Strings{"a", "c"}, Strings{"b", "d"}, two) == doctest::Approx(2.0 / 6.0));
    CHECK_THROWS_AS(ddi_rate(Strings{"zz"}, Strings{}, two), NotFoundError);
}

TEST_CASE("set metrics and ddi rate match enumeration on random instances") {
    std::mt19937_64 rng(2024);
    Strings universe;
    for (int i = 0; i < 10; ++i) universe.push_back(std::string(1, static_cast<char>('a' + i)));
    std::bernoulli_distribution coin(0.3);
    std::uniform_int_distribution<int> pick(0, 9);
    for (int t = 0; t < 1000; ++t) {
        Strings pred, truth, conc;
        for (int k = 0; k < pick(rng); ++k) pred.push_back(universe[pick(rng)]);
        truth.push_back(universe[pick(rng)]);
        for (int k = 0; k < pick(rng) / 2; ++k) truth.push_back(universe[pick(rng)]);
        for (int k = 0; k < pick(rng) / 3; ++k) conc.push_back(universe[pick(rng)]);
        std::set<std::pair<std::string, std::string>> ddi;
        for (int a = 0; a < 10; ++a)
            for (int b = a + 1; b < 10; ++b)
                if (coin(rng) && coin(rng)) ddi.insert({universe[a], universe[b]});
        auto store = letters_store(ddi);

        auto got = set_metrics(pred, truth);
        auto want = oracle::enumerate_set_metrics(universe, pred, truth);
        CHECK(got.jaccard == doctest::Approx(want.jaccard).epsilon(1e-12));
        CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-12));
        CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-12));
        CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
        CHECK(ddi_rate(pred, conc, store) == doctest::Approx(oracle::enumerate_ddi_rate(pred, conc, ddi)).epsilon(1e-12));

        // Relationships between the four numbers.
        CHECK(got.jaccard <= std::min(got.precision, got.recall) + 1e-12);
        CHECK(got.f1 == doctest::Approx(2 * got.jaccard / (1 + got.jaccard)).epsilon(1e-12));
        if (got.precision + got.recall > 0)
            CHECK(got.f1 == doctest::Approx(2 * got.precision * got.recall / (got.precision + got.recall)));
        CHECK(got.f1 >= std::min(got.precision, got.recall) - 1e-12);
        CHECK(got.f1 <= std::max(got.precision, got.recall) + 1e-12);
    }
}

TEST_CASE("ranking metrics") {
    CHECK(hit_at_1(Strings{"a", "b"}, Strings{"a"}) == 1.0);
    CHECK(hit_at_1(Strings{"b", "a"}, Strings{"a"}) == 0.0);
    CHECK(hit_at_1(Strings{}, Strings{"a"}) == 0.0);
    // Hits at ranks 1 and 3 of truth {a, c, z}: (1/1 + 2/3) / 3.
    CHECK(average_precision(Strings{"a", "b", "c"}, Strings{"a", "c", "z"}) == doctest::Approx((1.0 + 2.0 / 3.0) / 3.0));
    CHECK(average_precision(Strings{"a", "a", "c"}, Strings{"a", "c"}) == doctest::Approx(1.0));
}

TEST_CASE("evaluation with an oracle ranker") {
    auto store = letters_store({{"a", "b"}, {"c", "e"}});
    std::vector<PatientEHR> patients(3);
    patients[0].id = "p0";
    patients[0].ground_truth_drugs = {"a", "c"};
    patients[0].concomitant_drugs = {"e"};
    patients[1].id = "p1";
    patients[1].ground_truth_drugs = {"b"};
    patients[2].id = "p2";
    patients[2].ground_truth_drugs = {"d", "f", "g"};
    patients[2].concomitant_drugs = {"a"};
    auto r = evaluate(patients, [](const PatientEHR& p) { return p.ground_truth_drugs; }, store);
    CHECK(r.k == 5);
    CHECK(r.count() == 3);
    CHECK(r.means.jaccard == 1.0);
    CHECK(r.means.precision == 1.0);
    CHECK(r.means.recall == 1.0);
    CHECK(r.means.f1 == 1.0);
    CHECK(r.means.hit1 == 1.0);
    double truth_ddi = 0.0;
    for (const auto& p : patients) truth_ddi += ddi_rate(p.ground_truth_drugs, p.concomitant_drugs, store);
    CHECK(r.means.ddi == doctest::Approx(truth_ddi / 3));
    CHECK(r.means.ddi > 0.0);

    // Only the first k of the ranking count.
    auto r2 = evaluate(
        patients, [](const PatientEHR&) { return Strings{"x", "y", "a", "b", "c", "d"}; }, letters_store({}, 26), 2);
    CHECK(r2.means.f1 == 0.0);
    CHECK(r2.per_patient[0].predicted == Strings{"x", "y"});
}

TEST_CASE("per-patient csv round trip reproduces the means") {
    std::mt19937_64 rng(6);
    auto store = letters_store({{"a", "b"}, {"b", "c"}, {"d", "h"}});
    std::vector<PatientEHR> patients;
    Strings letters{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int i = 0; i < 40; ++i) {
        PatientEHR p;
        p.id = "p" + std::to_string(i);
        std::shuffle(letters.begin(), letters.end(), rng);
        p.ground_truth_drugs.assign(letters.begin(), letters.begin() + 1 + i % 3);
        p.concomitant_drugs = {letters[7]};
        patients.push_back(p);
    }
    auto r = evaluate(patients, [&](const PatientEHR&) {
        auto l = letters;
        std::shuffle(l.begin(), l.end(), rng);
        return l;
    }, store);
    TempDir dir;
    write_per_patient_csv(r, dir / "rows.csv");
    auto rows = read_per_patient_csv(dir / "rows.csv");
    REQUIRE(rows.size() == 40);
    CHECK(rows[3].patient_id == "p3");
    auto m = mean_of(rows);
    CHECK(std::abs(m.f1 - r.means.f1) <= 1e-12);
    CHECK(std::abs(m.jaccard - r.means.jaccard) <= 1e-12);
    CHECK(std::abs(m.ddi - r.means.ddi) <= 1e-12);
    CHECK(std::abs(m.prauc - r.means.prauc) <= 1e-12);

    auto j = to_json(r);
    CHECK(j["k"] == 5);
    CHECK(format_table(r, "test").find("F1") != std::string::npos);
}
