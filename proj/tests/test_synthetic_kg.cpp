#include <doctest.h>

#include <set>
#include <sstream>

#include "support.hpp"
#include "tracedr/errors.hpp"
#include "tracedr/synthetic_kg.hpp"

using namespace testing;

TEST_CASE("synthetic KG shape and determinism") {
    SyntheticKgConfig cfg;
    auto a = synthesize_kg(cfg);
    auto b = synthesize_kg(cfg);
    CHECK(a == b);
    CHECK(a.drugs().size() == static_cast<std::size_t>(cfg.n_drugs + 1 + cfg.scenario_peers));
    CHECK(a.diseases().size() == static_cast<std::size_t>(cfg.n_diseases + 1));
    CHECK(a.dangling().empty());
    cfg.seed = 8;
    CHECK_FALSE(synthesize_kg(cfg) == a);

    std::set<std::string> labels;
    for (const auto& d : a.diseases()) CHECK(labels.insert(d.label).second);
    for (const auto& d : a.diseases()) CHECK_FALSE(a.drugs_treating(d.id).empty());
}

TEST_CASE("interactions are exactly the shared-active pairs") {
    for (auto cfg : {SyntheticKgConfig{}, SyntheticKgConfig::planted()}) {
        auto s = synthesize_kg(cfg);
        const auto& drugs = s.drugs();
        for (std::size_t i = 0; i < drugs.size(); ++i)
            for (std::size_t j = 0; j < drugs.size(); ++j) {
                bool shared = i != j && drugs[i].ingredients.front() == drugs[j].ingredients.front();
                CHECK(s.has_ddi(drugs[i].id, drugs[j].id) == shared);
            }
    }
}

TEST_CASE("forbid rules are listed as population contraindications") {
    auto s = synthesize_kg(SyntheticKgConfig::planted());
    for (const auto& d : s.drugs())
        for (const auto& r : d.population_rules)
            if (r.action == SafeUseAction::forbid) {
                auto id = population_condition_id(r.population);
                CHECK(std::find(d.contraindications.begin(), d.contraindications.end(), id) !=
                      d.contraindications.end());
            }
}

TEST_CASE("planted world labels are brandless") {
    auto s = synthesize_kg(SyntheticKgConfig::planted());
    std::set<std::string> labels;
    for (const auto& d : s.drugs()) {
        CHECK(labels.insert(d.label).second);
        const auto& active = s.ingredient(d.ingredients.front()).label;
        CHECK(d.label.rfind(active + " ", 0) == 0);
        CHECK(d.treatments.size() <= 3);
    }
}

TEST_CASE("scenario fixture") {
    auto s = synthesize_kg(SyntheticKgConfig::planted());
    const auto& gest = s.drug(kScenarioDrugId);
    CHECK(gest.treatments == std::vector<std::string>{kScenarioDiseaseId});
    CHECK(std::find(gest.contraindications.begin(), gest.contraindications.end(), "population:pregnant") !=
          gest.contraindications.end());
    CHECK_FALSE(s.drug(kScenarioDrugId).interactions.empty());
    CHECK_FALSE(s.disease(kScenarioDiseaseId).constraints.has_value());
    CHECK(s.drugs_treating(kScenarioDiseaseId).size() == 6);
    CHECK(s.verbalize(kScenarioDrugId).text.find("pregnant (forbidden)") != std::string::npos);

    auto [preg, not_preg] = scenario_patients(s);
    CHECK(preg.age == 26);
    CHECK(preg.sex == Sex::female);
    CHECK(preg.has_tag(PopulationKind::pregnant));
    CHECK_FALSE(not_preg.has_tag(PopulationKind::pregnant));
    CHECK(preg.symptoms == not_preg.symptoms);
    CHECK_FALSE(preg.symptoms.empty());
    CHECK(s.violates_safe_use(kScenarioDrugId, preg));
    CHECK_FALSE(s.violates_safe_use(kScenarioDrugId, not_preg));
}

TEST_CASE("synthetic config json and validation") {
    auto cfg = SyntheticKgConfig::planted();
    auto back = SyntheticKgConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    auto bad = cfg;
    bad.pregnancy_forbid = 2.0;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    bad = cfg;
    bad.n_diseases = 100000;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
    CHECK_THROWS_AS(SyntheticKgConfig::from_json({{"n_drugs", "many"}}), ParseError);

    // Large worlds stay within the name space when actives are shared widely.
    SyntheticKgConfig big;
    big.n_diseases = 2600;
    big.n_drugs = 5200;
    big.drugs_per_active = 10;
    CHECK_NOTHROW(big.validate());
}

TEST_CASE("synthetic KG survives a JSONL round trip") {
    auto s = synthesize_kg(SyntheticKgConfig::planted());
    std::stringstream buf;
    s.write_jsonl(buf);
    CHECK(KGStore::from_jsonl(buf) == s);
}
