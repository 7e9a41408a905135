#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <json.hpp>

#include "tracedr/benchgen.hpp"
#include "tracedr/kg_store.hpp"

namespace tracedr {

/// Knobs of the synthetic knowledge graph.
///
/// Every drug has one active ingredient that also appears in its label plus a few excipients. Two drugs interact iff
/// they share the active ingredient, so DDI partners can be read off the
/// evidence text. Disease labels combine an organ and a condition word (and a
/// modifier once the two-word space is used up), so labels overlap lexically.
struct SyntheticKgConfig {
    int n_drugs = 300;
    int n_diseases = 100;
    /// Average number of drugs sharing one active ingredient.
    double drugs_per_active = 2.2;
    int extra_treatments_max = 3;  // beyond the primary disease
    int excipients_max = 2;
    int disease_contraindications_max = 1;
    double allergen_fraction = 0.2;  // of active ingredients
    double pregnancy_forbid = 0.2;
    double breastfeeding_forbid = 0.1;
    double liver_rule = 0.08;
    double renal_rule = 0.08;
    double child_rule = 0.08;
    double elderly_rule = 0.08;
    /// Prefix drug labels with an invented brand word. Without brands the
    /// label is "<active> <form>", with forms distinct among drugs sharing
    /// an active ingredient as long as the forms suffice.
    bool brand_names = true;
    /// Adds the pregnancy scenario (see scenario_patients): one more disease,
    /// treated by a pregnancy-forbidden drug and `scenario_peers` other drugs.
    bool scenario_fixture = true;
    int scenario_peers = 4;
    std::uint64_t seed = 7;

    /// The planted-signal world: ~300 drugs, ~100 diseases, brandless
    /// labels and at most three treatments per drug.
    static SyntheticKgConfig planted();

    void validate() const;
    nlohmann::json to_json() const;
    static SyntheticKgConfig from_json(const nlohmann::json& j);
};

KGStore synthesize_kg(const SyntheticKgConfig& cfg);

/// Benchmark settings for the planted world: 3,000 records (so up to 40 per
/// disease) and a 15% pregnancy quota so the scenario rule is well supported.
GenConfig planted_gen_config(std::uint64_t seed = 3);

/// Ids of the fixture added when `scenario_fixture` is set.
inline constexpr const char* kScenarioDiseaseId = "DSFIX";
inline constexpr const char* kScenarioDrugId = "DRGEST";

/// Two otherwise identical 26-year-old women with the scenario disease;
/// only the first is pregnant. Symptoms come from the lexicon generator.
std::pair<PatientEHR, PatientEHR> scenario_patients(const KGStore& store);

}  // namespace tracedr
