#include "tracedr/synthetic_kg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "tracedr/benchgen.hpp"
#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

namespace {

constexpr std::array kOrgans = {"liver",   "kidney", "lung",    "skin",    "stomach",   "heart",
                                "bladder", "joint",  "eye",     "ear",     "throat",    "bone",
                                "colon",   "nerve",  "muscle",  "thyroid", "sinus",     "gum",
                                "bronchial", "pancreas", "prostate", "ovary", "spleen", "tendon"};
constexpr std::array kConditions = {"inflammation", "infection", "ulcer",  "fibrosis",      "pain",       "edema",
                                    "spasm",        "lesion",    "cyst",   "insufficiency", "hemorrhage", "stenosis"};
constexpr std::array kModifiers = {"acute",  "chronic",   "recurrent", "juvenile", "senile",     "mild",
                                   "severe", "allergic",  "viral",     "bacterial", "congenital", "postoperative"};
constexpr std::array kPrefixes = {"amo",   "cefu",  "levo",  "metro", "cipro", "doxy",  "azi",   "clari",
                                  "predni", "ibu",  "napro", "para",  "omepra", "panto", "losa", "vala",
                                  "ator",  "simva", "metfor", "glipi", "sertra", "fluo", "ceti", "lora",
                                  "furo",  "hydro", "spiro", "warfa", "clopi", "allo"};
constexpr std::array kSuffixes = {"xacin", "cillin", "mycin", "zole",   "pril",    "sartan",
                                  "statin", "profen", "olol", "dipine", "tadine",  "semide",
                                  "lone",  "mab",    "triptan", "zepam", "formin", "gliptin"};
constexpr std::array kSalts = {"sodium", "calcium", "magnesium", "potassium", "zinc"};
constexpr std::array kAnions = {"stearate", "citrate", "chloride", "lactate", "phosphate", "benzoate", "sulfate",
                                "carbonate"};
constexpr std::array kForms = {"tablets", "capsules", "injection", "syrup", "granules", "suspension"};
constexpr std::array kConsonants = {'b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'};
constexpr std::array kVowels = {'a', 'e', 'i', 'o', 'u'};

std::string numbered(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
    return buf;
}

template <class T>
T pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

bool coin(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::string brand_name(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> syllables(2, 3);
    std::string s;
    int n = syllables(rng);
    for (int i = 0; i < n; ++i) {
        s += kConsonants[rng() % kConsonants.size()];
        s += kVowels[rng() % kVowels.size()];
    }
    s += "x";
    s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::optional<DemographicConstraints> constraints_for(std::string_view modifier, std::string_view organ) {
    DemographicConstraints c;
    bool any = false;
    if (organ == "prostate") c.sex = Sex::male, any = true;
    if (organ == "ovary") c.sex = Sex::female, any = true;
    if (modifier == "juvenile") c.max_age = 17, any = true;
    if (modifier == "senile") c.min_age = 60, any = true;
    if (!any) return std::nullopt;
    return c;
}

}  // namespace

SyntheticKgConfig SyntheticKgConfig::planted() {
    SyntheticKgConfig c;
    c.brand_names = false;
    c.extra_treatments_max = 2;
    c.pregnancy_forbid = 0.3;
    c.scenario_peers = 5;
    return c;
}

GenConfig planted_gen_config(std::uint64_t seed) {
    GenConfig g;
    g.n_patients = 3000;
    g.max_patients_per_disease = 40;
    g.quotas.pregnant = 0.15;
    g.seed = seed;
    return g;
}

void SyntheticKgConfig::validate() const {
    if (n_drugs < 2 || n_diseases < 1) throw InvalidArgument("synthetic KG needs >= 2 drugs and >= 1 disease");
    const auto max_diseases = kOrgans.size() * kConditions.size() * (kModifiers.size() + 1) - 100;
    if (static_cast<std::size_t>(n_diseases) > max_diseases)
        throw InvalidArgument("n_diseases exceeds the label space (" + std::to_string(max_diseases) + ")");
    if (drugs_per_active < 1.0) throw InvalidArgument("drugs_per_active must be >= 1");
    if (static_cast<double>(n_drugs) / drugs_per_active > static_cast<double>(kPrefixes.size() * kSuffixes.size()))
        throw InvalidArgument("too many active ingredients for the name space");
    for (double p : {allergen_fraction, pregnancy_forbid, breastfeeding_forbid, liver_rule, renal_rule, child_rule,
                     elderly_rule})
        if (p < 0.0 || p > 1.0) throw InvalidArgument("synthetic KG rates must lie in [0,1]");
    if (scenario_peers < 0) throw InvalidArgument("scenario_peers must be >= 0");
    if (extra_treatments_max < 0 || excipients_max < 0 || disease_contraindications_max < 0)
        throw InvalidArgument("synthetic KG counts must be >= 0");
}

json SyntheticKgConfig::to_json() const {
    return {{"n_drugs", n_drugs},
            {"n_diseases", n_diseases},
            {"drugs_per_active", drugs_per_active},
            {"extra_treatments_max", extra_treatments_max},
            {"excipients_max", excipients_max},
            {"disease_contraindications_max", disease_contraindications_max},
            {"allergen_fraction", allergen_fraction},
            {"pregnancy_forbid", pregnancy_forbid},
            {"breastfeeding_forbid", breastfeeding_forbid},
            {"liver_rule", liver_rule},
            {"renal_rule", renal_rule},
            {"child_rule", child_rule},
            {"elderly_rule", elderly_rule},
            {"brand_names", brand_names},
            {"scenario_fixture", scenario_fixture},
            {"scenario_peers", scenario_peers},
            {"seed", seed}};
}

SyntheticKgConfig SyntheticKgConfig::from_json(const json& j) {
    SyntheticKgConfig c;
    try {
        c.n_drugs = j.value("n_drugs", c.n_drugs);
        c.n_diseases = j.value("n_diseases", c.n_diseases);
        c.drugs_per_active = j.value("drugs_per_active", c.drugs_per_active);
        c.extra_treatments_max = j.value("extra_treatments_max", c.extra_treatments_max);
        c.excipients_max = j.value("excipients_max", c.excipients_max);
        c.disease_contraindications_max = j.value("disease_contraindications_max", c.disease_contraindications_max);
        c.allergen_fraction = j.value("allergen_fraction", c.allergen_fraction);
        c.pregnancy_forbid = j.value("pregnancy_forbid", c.pregnancy_forbid);
        c.breastfeeding_forbid = j.value("breastfeeding_forbid", c.breastfeeding_forbid);
        c.liver_rule = j.value("liver_rule", c.liver_rule);
        c.renal_rule = j.value("renal_rule", c.renal_rule);
        c.child_rule = j.value("child_rule", c.child_rule);
        c.elderly_rule = j.value("elderly_rule", c.elderly_rule);
        c.brand_names = j.value("brand_names", c.brand_names);
        c.scenario_fixture = j.value("scenario_fixture", c.scenario_fixture);
        c.scenario_peers = j.value("scenario_peers", c.scenario_peers);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad synthetic KG config: ") + e.what());
    }
    c.validate();
    return c;
}

KGStore synthesize_kg(const SyntheticKgConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);

    // Diseases: two-word labels first, then modifier-prefixed ones.
    std::vector<std::tuple<std::string, std::string, std::string>> space;
    for (auto o : kOrgans)
        for (auto c : kConditions) space.emplace_back("", o, c);
    std::shuffle(space.begin(), space.end(), rng);
    if (static_cast<std::size_t>(cfg.n_diseases) + 8 > space.size()) {
        std::vector<std::tuple<std::string, std::string, std::string>> more;
        for (auto m : kModifiers)
            for (auto o : kOrgans)
                for (auto c : kConditions) more.emplace_back(m, o, c);
        std::shuffle(more.begin(), more.end(), rng);
        space.insert(space.end(), more.begin(), more.end());
    }
    std::vector<DiseaseRecord> diseases;
    for (int i = 0; i < cfg.n_diseases; ++i) {
        const auto& [m, o, c] = space[static_cast<std::size_t>(i)];
        DiseaseRecord d;
        d.id = numbered("DS", i + 1);
        d.label = (m.empty() ? "" : m + " ") + o + " " + c;
        d.constraints = constraints_for(m, o);
        diseases.push_back(std::move(d));
    }

    // Active ingredients and excipients.
    std::vector<std::string> active_names;
    for (auto p : kPrefixes)
        for (auto s : kSuffixes) active_names.push_back(std::string(p) + s);
    std::shuffle(active_names.begin(), active_names.end(), rng);
    const int n_active = std::max(1, static_cast<int>(std::lround(cfg.n_drugs / cfg.drugs_per_active)));
    std::vector<IngredientRecord> ingredients;
    std::vector<std::string> actives, excipients;
    for (int i = 0; i < n_active; ++i) {
        IngredientRecord r{numbered("IN", i + 1), active_names[static_cast<std::size_t>(i)],
                           coin(cfg.allergen_fraction, rng)};
        actives.push_back(r.id);
        ingredients.push_back(std::move(r));
    }
    int next_ing = n_active + 1;
    for (auto s : kSalts)
        for (auto a : kAnions) {
            IngredientRecord r{numbered("IN", next_ing++), std::string(s) + " " + a, false};
            excipients.push_back(r.id);
            ingredients.push_back(std::move(r));
        }
    auto ingredient_label = [&](const std::string& id) -> const std::string& {
        for (const auto& r : ingredients)
            if (r.id == id) return r.label;
        throw NotFoundError(id);
    };

    // Each active ingredient is used by at least one drug.
    std::vector<std::string> active_of(static_cast<std::size_t>(cfg.n_drugs));
    for (int i = 0; i < cfg.n_drugs; ++i)
        active_of[static_cast<std::size_t>(i)] =
            i < n_active ? actives[static_cast<std::size_t>(i)] : pick(actives, rng);
    std::shuffle(active_of.begin(), active_of.end(), rng);

    std::vector<std::string> disease_ids;
    for (const auto& d : diseases) disease_ids.push_back(d.id);
    std::vector<std::string> primary = disease_ids;
    std::shuffle(primary.begin(), primary.end(), rng);

    std::set<std::string> labels_taken;
    std::vector<DrugRecord> drugs;
    std::uniform_int_distribution<int> extra_treat(0, cfg.extra_treatments_max);
    std::uniform_int_distribution<int> n_excip(0, cfg.excipients_max);
    std::uniform_int_distribution<int> n_contra(0, cfg.disease_contraindications_max);
    for (int i = 0; i < cfg.n_drugs; ++i) {
        DrugRecord d;
        d.id = numbered("DR", i + 1);
        const auto& active = active_of[static_cast<std::size_t>(i)];
        std::string form = kForms[rng() % kForms.size()];
        d.label = ingredient_label(active) + " " + form;
        for (std::size_t f = 0; !cfg.brand_names && labels_taken.count(d.label) && f < kForms.size(); ++f)
            d.label = ingredient_label(active) + " " + kForms[f];
        while (cfg.brand_names || !labels_taken.insert(d.label).second) {
            d.label = brand_name(rng) + " " + ingredient_label(active) + " " + form;
            if (labels_taken.insert(d.label).second) break;
        }

        std::set<std::string> treats{primary[static_cast<std::size_t>(i) % primary.size()]};
        for (int k = extra_treat(rng); k > 0 && treats.size() < disease_ids.size(); --k) treats.insert(pick(disease_ids, rng));
        d.treatments.assign(treats.begin(), treats.end());

        d.ingredients.push_back(active);
        std::set<std::string> ex;
        for (int k = n_excip(rng); k > 0; --k) ex.insert(pick(excipients, rng));
        d.ingredients.insert(d.ingredients.end(), ex.begin(), ex.end());

        for (int k = n_contra(rng); k > 0; --k) {
            auto c = pick(disease_ids, rng);
            if (!treats.count(c) &&
                std::find(d.contraindications.begin(), d.contraindications.end(), c) == d.contraindications.end())
                d.contraindications.push_back(c);
        }
        auto add_rule = [&](PopulationTag tag, SafeUseAction action) {
            d.population_rules.push_back({tag, action});
            if (action == SafeUseAction::forbid) d.contraindications.push_back(population_condition_id(tag));
        };
        if (coin(cfg.pregnancy_forbid, rng)) add_rule(PopulationTag::pregnant(), SafeUseAction::forbid);
        if (coin(cfg.breastfeeding_forbid, rng)) add_rule(PopulationTag::breastfeeding(), SafeUseAction::forbid);
        if (coin(cfg.liver_rule, rng))
            add_rule(PopulationTag::reduced_liver(), coin(0.5, rng) ? SafeUseAction::forbid : SafeUseAction::caution);
        if (coin(cfg.renal_rule, rng))
            add_rule(PopulationTag::reduced_renal(), coin(0.5, rng) ? SafeUseAction::forbid : SafeUseAction::caution);
        if (coin(cfg.child_rule, rng)) add_rule(PopulationTag::child_below(12), SafeUseAction::forbid);
        if (coin(cfg.elderly_rule, rng)) add_rule(PopulationTag::elderly_above(65), SafeUseAction::caution);
        d.usage = "Take as directed.";
        drugs.push_back(std::move(d));
    }
    // Interactions: shared active ingredient.
    for (auto& a : drugs)
        for (const auto& b : drugs)
            if (a.id != b.id && a.ingredients.front() == b.ingredients.front()) a.interactions.push_back(b.id);

    if (cfg.scenario_fixture) {
        // Label from the same vocabulary, so training patients can have it too.
        std::size_t at = static_cast<std::size_t>(cfg.n_diseases);
        while (constraints_for(std::get<0>(space.at(at)), std::get<1>(space.at(at)))) ++at;
        const auto& [m, o, c] = space[at];
        diseases.push_back({kScenarioDiseaseId, (m.empty() ? "" : m + " ") + o + " " + c, std::nullopt});
        auto fixture_drug = [&](std::string id) {
            DrugRecord d;
            d.id = std::move(id);
            const auto active = pick(actives, rng);
            for (std::size_t f = 0; f < kForms.size() && d.label.empty(); ++f) {
                std::string label = ingredient_label(active) + " " + kForms[f];
                if (labels_taken.insert(label).second) d.label = label;
            }
            while (d.label.empty()) {
                std::string label = brand_name(rng) + " " + ingredient_label(active) + " " + kForms[0];
                if (labels_taken.insert(label).second) d.label = label;
            }
            d.treatments = {kScenarioDiseaseId};
            d.ingredients = {active};
            d.usage = "Take as directed.";
            return d;
        };
        DrugRecord gest = fixture_drug(kScenarioDrugId);
        gest.contraindications = {population_condition_id(PopulationTag::pregnant())};
        gest.population_rules = {{PopulationTag::pregnant(), SafeUseAction::forbid}};
        drugs.push_back(gest);
        for (int i = 1; i <= cfg.scenario_peers; ++i) {
            DrugRecord d = fixture_drug("DRFIX" + std::to_string(i));
            d.treatments.push_back(pick(disease_ids, rng));
            drugs.push_back(d);
        }
        // Interactions through the shared active ingredient, both ways.
        for (std::size_t i = drugs.size() - 1 - cfg.scenario_peers; i < drugs.size(); ++i)
            for (std::size_t j = 0; j < drugs.size(); ++j)
                if (i != j && drugs[i].ingredients.front() == drugs[j].ingredients.front()) {
                    drugs[i].interactions.push_back(drugs[j].id);
                    drugs[j].interactions.push_back(drugs[i].id);
                }
    }
    return KGStore::from_records(std::move(drugs), std::move(diseases), std::move(ingredients));
}

std::pair<PatientEHR, PatientEHR> scenario_patients(const KGStore& store) {
    PatientEHR p;
    p.id = "scenario-pregnant";
    p.age = 26;
    p.sex = Sex::female;
    p.population_tags = {PopulationTag::pregnant()};
    p.current_disease = kScenarioDiseaseId;
    p.symptoms = LexiconSymptomGenerator(0).generate(p, store.disease(kScenarioDiseaseId));
    PatientEHR q = p;
    q.id = "scenario-not-pregnant";
    q.population_tags.clear();
    return {p, q};
}

}  // namespace tracedr
