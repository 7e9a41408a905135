#include "tracedr/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace tracedr {

using nlohmann::json;

namespace {

double bernoulli_draw(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Probability that an age drawn from `table` lies in [lo, hi].
double age_mass(const std::vector<AgeBand>& table, int lo, int hi) {
    double total = 0.0, in = 0.0;
    for (const auto& b : table) {
        total += b.weight;
        int a = std::max(lo, b.lo), z = std::min(hi, b.hi);
        if (a <= z) in += b.weight * (z - a + 1) / static_cast<double>(b.hi - b.lo + 1);
    }
    return total > 0 ? in / total : 0.0;
}

struct ConditionalRates {
    double pregnant = 0.0;
    double breastfeeding = 0.0;
};

constexpr int kPregnantMin = 18, kPregnantMax = 45;
constexpr int kBreastfeedingMin = 18, kBreastfeedingMax = 50;

ConditionalRates conditional_rates(const GenConfig& cfg) {
    const double female = 1.0 - cfg.male_fraction;
    const double preg_eligible = female * age_mass(cfg.age_table, kPregnantMin, kPregnantMax);
    const double bf_eligible =
        female * age_mass(cfg.age_table, kBreastfeedingMin, kBreastfeedingMax) - cfg.quotas.pregnant;
    ConditionalRates r;
    r.pregnant = cfg.quotas.pregnant == 0.0 ? 0.0 : cfg.quotas.pregnant / preg_eligible;
    r.breastfeeding = cfg.quotas.breastfeeding == 0.0 ? 0.0 : cfg.quotas.breastfeeding / bf_eligible;
    return r;
}

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

bool contains_any(std::string_view hay, std::initializer_list<std::string_view> needles) {
    return std::any_of(needles.begin(), needles.end(), [&](auto n) { return contains(hay, n); });
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    return h;
}

const std::map<std::string, std::vector<std::string>, std::less<>>& label_lexicon() {
    static const std::map<std::string, std::vector<std::string>, std::less<>> m = {
        {"respiratory tract infection", {"cough", "phlegm", "fever"}},
        {"common cold", {"sneezing", "runny nose", "sore throat"}},
        {"urinary tract infection", {"frequent urination", "burning urination", "lower abdominal pain"}},
        {"hypertension", {"headache", "dizziness"}},
        {"migraine", {"throbbing headache", "nausea", "light sensitivity"}},
        {"gastroenteritis", {"diarrhea", "vomiting", "abdominal cramps"}},
    };
    return m;
}

const std::map<std::string, std::vector<std::string>, std::less<>>& word_lexicon() {
    static const std::map<std::string, std::vector<std::string>, std::less<>> m = {
        {"liver", {"jaundice", "fatigue", "dark urine"}},
        {"kidney", {"flank ache", "reduced urine output"}},
        {"lung", {"shortness of breath", "cough"}},
        {"skin", {"rash", "itching"}},
        {"stomach", {"nausea", "epigastric discomfort"}},
        {"heart", {"chest tightness", "palpitations"}},
        {"bladder", {"frequent urination", "urgency"}},
        {"joint", {"stiffness", "limited motion"}},
        {"eye", {"blurred vision", "redness"}},
        {"ear", {"earache", "hearing loss"}},
        {"throat", {"sore throat", "hoarseness"}},
        {"bone", {"deep aching", "fracture risk"}},
        {"colon", {"diarrhea", "abdominal cramps"}},
        {"nerve", {"numbness", "tingling"}},
        {"muscle", {"weakness", "myalgia"}},
        {"thyroid", {"weight change", "heat intolerance"}},
        {"sinus", {"nasal congestion", "facial pressure"}},
        {"gum", {"bleeding gums"}},
        {"bronchial", {"wheezing", "cough"}},
        {"pancreas", {"upper abdominal ache", "nausea"}},
        {"prostate", {"difficult urination"}},
        {"ovary", {"pelvic discomfort"}},
        {"spleen", {"left upper abdominal ache"}},
        {"tendon", {"tenderness"}},
        {"inflammation", {"swelling", "redness"}},
        {"infection", {"fever", "chills"}},
        {"ulcer", {"burning sensation"}},
        {"fibrosis", {"stiffness"}},
        {"pain", {"aching"}},
        {"edema", {"swelling"}},
        {"spasm", {"cramping"}},
        {"lesion", {"local tenderness"}},
        {"cyst", {"palpable lump"}},
        {"insufficiency", {"fatigue"}},
        {"hemorrhage", {"bleeding"}},
        {"stenosis", {"obstruction"}},
        {"acute", {"sudden onset"}},
        {"chronic", {"persistent discomfort"}},
    };
    return m;
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(ascii_lower(s));
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

bool admits(const DiseaseRecord& d, const PatientEHR& p) { return !d.constraints || d.constraints->admits(p.age, p.sex); }

}  // namespace

std::vector<AgeBand> GenConfig::default_age_table() {
    return {{0, 4, 0.055},   {5, 11, 0.085},  {12, 17, 0.075}, {18, 29, 0.16}, {30, 44, 0.21},
            {45, 59, 0.20}, {60, 64, 0.06}, {65, 79, 0.12},  {80, 95, 0.035}};
}

void GenConfig::validate() const {
    if (n_patients < 1) throw InvalidArgument("n_patients must be >= 1");
    if (male_fraction < 0.0 || male_fraction > 1.0) throw InvalidArgument("male_fraction must lie in [0,1]");
    for (auto [name, q] : {std::pair{"pregnant", quotas.pregnant}, {"breastfeeding", quotas.breastfeeding},
                           {"reduced_liver", quotas.reduced_liver}, {"reduced_renal", quotas.reduced_renal},
                           {"allergies", quotas.allergies}})
        if (q < 0.0 || q > 1.0) throw InvalidArgument(std::string("quota ") + name + " must lie in [0,1]");
    if (split[0] < 0 || split[1] < 0 || split[2] < 0 || split[0] + split[1] + split[2] != 100)
        throw InvalidArgument("split must be three non-negative integers summing to 100");
    if (max_patients_per_disease < 1) throw InvalidArgument("max_patients_per_disease must be >= 1");
    if (concomitant_min < 0 || concomitant_max < concomitant_min)
        throw InvalidArgument("concomitant range must satisfy 0 <= min <= max");
    if (age_table.empty()) throw InvalidArgument("age_table is empty");
    for (const auto& b : age_table)
        if (b.lo < 0 || b.hi < b.lo || b.weight < 0.0) throw InvalidArgument("bad age band");
    if (max_retries < 1) throw InvalidArgument("max_retries must be >= 1");
    auto r = conditional_rates(*this);
    if (!(r.pregnant <= 1.0) || !(r.breastfeeding <= 1.0) || r.breastfeeding < 0.0)
        throw InvalidArgument("pregnancy/breastfeeding quotas exceed the eligible female population");
}

json GenConfig::to_json() const {
    json bands = json::array();
    for (const auto& b : age_table) bands.push_back({{"lo", b.lo}, {"hi", b.hi}, {"weight", b.weight}});
    return {{"n_patients", n_patients},
            {"male_fraction", male_fraction},
            {"quotas",
             {{"pregnant", quotas.pregnant},
              {"breastfeeding", quotas.breastfeeding},
              {"reduced_liver", quotas.reduced_liver},
              {"reduced_renal", quotas.reduced_renal},
              {"allergies", quotas.allergies}}},
            {"max_patients_per_disease", max_patients_per_disease},
            {"concomitant_range", {concomitant_min, concomitant_max}},
            {"split", split},
            {"age_table", bands},
            {"max_retries", max_retries},
            {"child_age", child_age},
            {"elderly_age", elderly_age},
            {"quota_audit_min_n", quota_audit_min_n},
            {"quota_tolerance", quota_tolerance},
            {"seed", seed}};
}

GenConfig GenConfig::from_json(const json& j) { return from_json(j, GenConfig{}); }

GenConfig GenConfig::from_json(const json& j, GenConfig c) {
    if (!j.is_object()) throw ParseError("generation config must be a JSON object");
    try {
        c.n_patients = j.value("n_patients", c.n_patients);
        c.male_fraction = j.value("male_fraction", c.male_fraction);
        if (j.contains("quotas")) {
            const auto& q = j.at("quotas");
            c.quotas.pregnant = q.value("pregnant", c.quotas.pregnant);
            c.quotas.breastfeeding = q.value("breastfeeding", c.quotas.breastfeeding);
            c.quotas.reduced_liver = q.value("reduced_liver", c.quotas.reduced_liver);
            c.quotas.reduced_renal = q.value("reduced_renal", c.quotas.reduced_renal);
            c.quotas.allergies = q.value("allergies", c.quotas.allergies);
        }
        c.max_patients_per_disease = j.value("max_patients_per_disease", c.max_patients_per_disease);
        if (j.contains("concomitant_range")) {
            const auto& r = j.at("concomitant_range");
            if (!r.is_array() || r.size() != 2) throw ParseError("concomitant_range must be [min, max]");
            c.concomitant_min = r[0].get<int>();
            c.concomitant_max = r[1].get<int>();
        }
        if (j.contains("split")) c.split = j.at("split").get<std::array<int, 3>>();
        if (j.contains("age_table")) {
            c.age_table.clear();
            for (const auto& b : j.at("age_table"))
                c.age_table.push_back({b.at("lo").get<int>(), b.at("hi").get<int>(), b.at("weight").get<double>()});
        }
        c.max_retries = j.value("max_retries", c.max_retries);
        c.child_age = j.value("child_age", c.child_age);
        c.elderly_age = j.value("elderly_age", c.elderly_age);
        c.quota_audit_min_n = j.value("quota_audit_min_n", c.quota_audit_min_n);
        c.quota_tolerance = j.value("quota_tolerance", c.quota_tolerance);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad generation config: ") + e.what());
    }
    c.validate();
    return c;
}

bool RuleApplicabilityFilter::applicable(const PatientEHR& p, const DiseaseRecord& d) const {
    if (!admits(d, p)) return false;
    const std::string label = ascii_lower(d.label);
    if (contains_any(label, {"prostat", "testic", "erectile"}) && p.sex != Sex::male) return false;
    if (contains_any(label, {"ovar", "uter", "cervic", "menstru", "pregnan", "gestation", "postpartum"}) &&
        p.sex != Sex::female)
        return false;
    if (contains_any(label, {"pregnan", "gestation", "postpartum"}) && (p.age < 12 || p.age > 55)) return false;
    if (contains_any(label, {"juvenile", "infant", "neonat", "pediatric", "childhood"}) && p.age > 17) return false;
    if (contains_any(label, {"senile", "menopaus"}) && p.age < 40) return false;
    return true;
}

std::vector<std::string> LexiconSymptomGenerator::generate(const PatientEHR&, const DiseaseRecord& disease) const {
    const std::string label = ascii_lower(disease.label);
    if (auto it = label_lexicon().find(label); it != label_lexicon().end()) return it->second;
    std::vector<std::string> pool;
    for (const auto& w : split_words(label))
        if (auto it = word_lexicon().find(w); it != word_lexicon().end())
            for (const auto& s : it->second)
                if (std::find(pool.begin(), pool.end(), s) == pool.end()) pool.push_back(s);
    if (pool.empty()) return {"general malaise"};
    std::mt19937_64 rng(fnv1a(disease.id, seed_ ^ 0x9E3779B97F4A7C15ULL));
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t keep = std::min<std::size_t>(pool.size(), 2 + rng() % 2);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(pool[i]);
    return out;
}

PatientEHR gen_patient_base(const GenConfig& cfg, const KGStore& store, std::mt19937_64& rng) {
    const auto rates = conditional_rates(cfg);
    PatientEHR p;
    p.sex = bernoulli_draw(rng) < cfg.male_fraction ? Sex::male : Sex::female;
    std::vector<double> weights;
    for (const auto& b : cfg.age_table) weights.push_back(b.weight);
    const auto& band = cfg.age_table[std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng)];
    p.age = std::uniform_int_distribution<int>(band.lo, band.hi)(rng);

    const bool female = p.sex == Sex::female;
    bool pregnant = false;
    if (female && p.age >= kPregnantMin && p.age <= kPregnantMax && bernoulli_draw(rng) < rates.pregnant) {
        pregnant = true;
        p.population_tags.push_back(PopulationTag::pregnant());
    }
    if (female && !pregnant && p.age >= kBreastfeedingMin && p.age <= kBreastfeedingMax &&
        bernoulli_draw(rng) < rates.breastfeeding)
        p.population_tags.push_back(PopulationTag::breastfeeding());
    if (bernoulli_draw(rng) < cfg.quotas.reduced_liver) p.population_tags.push_back(PopulationTag::reduced_liver());
    if (bernoulli_draw(rng) < cfg.quotas.reduced_renal) p.population_tags.push_back(PopulationTag::reduced_renal());
    if (p.age < cfg.child_age) p.population_tags.push_back(PopulationTag::child_below(cfg.child_age));
    if (p.age >= cfg.elderly_age) p.population_tags.push_back(PopulationTag::elderly_above(cfg.elderly_age));

    if (bernoulli_draw(rng) < cfg.quotas.allergies) {
        std::vector<std::string> allergens;
        for (const auto& ing : store.ingredients())
            if (ing.is_allergen) allergens.push_back(ing.id);
        if (!allergens.empty()) {
            std::size_t n = std::min<std::size_t>(allergens.size(), bernoulli_draw(rng) < 0.25 ? 2 : 1);
            std::shuffle(allergens.begin(), allergens.end(), rng);
            allergens.resize(n);
            p.allergies = std::move(allergens);
        }
    }
    return p;
}

std::string assign_disease(const PatientEHR& patient, const KGStore& store, const ApplicabilityFilter& filter,
                           UsageCounter& usage, int max_per_disease, std::mt19937_64& rng,
                           const std::vector<std::string>& exclude) {
    std::vector<const DiseaseRecord*> pool;
    for (const auto& d : store.diseases()) {
        auto it = usage.find(d.id);
        if (it != usage.end() && it->second >= max_per_disease) continue;
        if (store.drugs_treating(d.id).empty() || !admits(d, patient)) continue;
        if (std::find(exclude.begin(), exclude.end(), d.id) != exclude.end()) continue;
        pool.push_back(&d);
    }
    // Rejection against the (possibly remote) filter keeps the draw uniform
    // over accepted diseases while asking it only about sampled ones.
    while (!pool.empty()) {
        std::size_t i = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
        const DiseaseRecord* d = pool[i];
        if (filter.applicable(patient, *d)) {
            ++usage[d->id];
            return d->id;
        }
        pool[i] = pool.back();
        pool.pop_back();
    }
    throw GenerationError("no applicable disease left for the patient");
}

std::vector<std::string> gen_symptoms(const PatientEHR& patient, const DiseaseRecord& disease,
                                      const SymptomGenerator& generator) {
    auto s = generator.generate(patient, disease);
    if (s.empty()) throw GenerationError("symptom generator returned nothing for " + disease.id);
    return s;
}

History gen_history_and_truth(const PatientEHR& patient, const std::string& disease_id, const KGStore& store,
                              const ApplicabilityFilter& filter, int concomitant_min, int concomitant_max,
                              std::mt19937_64& rng) {
    const auto& candidates = store.drugs_treating(disease_id);
    if (candidates.empty()) throw GenerationError("disease " + disease_id + " has no treating drug");
    std::unordered_set<std::string> in_c(candidates.begin(), candidates.end());

    std::vector<std::string> qualifying;
    for (const auto& d : store.drugs()) {
        if (in_c.count(d.id) || store.violates_safe_use(d.id, patient)) continue;
        bool interacts = std::any_of(candidates.begin(), candidates.end(),
                                     [&](const std::string& c) { return store.has_ddi(d.id, c); });
        if (interacts) qualifying.push_back(d.id);
    }
    if (qualifying.size() < static_cast<std::size_t>(std::max(concomitant_min, 1)) && concomitant_min > 0)
        throw GenerationError("no drug interacting with the treatments of " + disease_id + " is usable");

    History h;
    int want = std::uniform_int_distribution<int>(concomitant_min, concomitant_max)(rng);
    want = std::min<int>(want, static_cast<int>(qualifying.size()));
    for (int i = 0; i < want; ++i) {
        std::size_t j = std::uniform_int_distribution<std::size_t>(static_cast<std::size_t>(i),
                                                                    qualifying.size() - 1)(rng);
        std::swap(qualifying[static_cast<std::size_t>(i)], qualifying[j]);
        h.concomitant.push_back(qualifying[static_cast<std::size_t>(i)]);
    }
    for (const auto& c : h.concomitant)
        for (const auto& dis : store.drug(c).treatments) {
            if (dis == disease_id || std::find(h.past_diseases.begin(), h.past_diseases.end(), dis) !=
                                         h.past_diseases.end())
                continue;
            if (filter.applicable(patient, store.disease(dis))) h.past_diseases.push_back(dis);
        }
    for (const auto& c : candidates) {
        bool clash = std::any_of(h.concomitant.begin(), h.concomitant.end(),
                                 [&](const std::string& m) { return store.has_ddi(c, m); });
        if (!clash && !store.violates_safe_use(c, patient)) h.truth.push_back(c);
    }
    if (h.truth.empty()) throw GenerationError("every treatment of " + disease_id + " was pruned");
    return h;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<int, 3>& split) {
    std::size_t train = n * static_cast<std::size_t>(split[0]) / 100;
    std::size_t dev = n * static_cast<std::size_t>(split[1]) / 100;
    return {train, dev, n - train - dev};
}

AuditReport audit_benchmark(const Benchmark& b, const KGStore& store, const GenConfig& cfg) {
    AuditReport r;
    r.split_sizes = {b.train.size(), b.dev.size(), b.test.size()};
    r.total = b.train.size() + b.dev.size() + b.test.size();
    r.expected_split_sizes = split_sizes(r.total, cfg.split);
    std::map<std::string, int> usage;
    for (const auto* part : {&b.train, &b.dev, &b.test})
        for (const auto& p : *part) {
            (p.sex == Sex::male ? r.male : r.female)++;
            if (p.age < cfg.child_age) ++r.children;
            if (p.age >= cfg.elderly_age) ++r.elderly;
            const bool preg = p.has_tag(PopulationKind::pregnant), bf = p.has_tag(PopulationKind::breastfeeding);
            r.pregnant += preg;
            r.breastfeeding += bf;
            r.reduced_liver += p.has_tag(PopulationKind::reduced_liver);
            r.reduced_renal += p.has_tag(PopulationKind::reduced_renal);
            r.allergies += !p.allergies.empty();
            ++usage[p.current_disease];

            bool inconsistent = p.ground_truth_drugs.empty() || (preg && bf) ||
                                ((preg || bf) && p.sex == Sex::male) ||
                                (preg && (p.age < kPregnantMin || p.age > kPregnantMax)) ||
                                (bf && (p.age < kBreastfeedingMin || p.age > kBreastfeedingMax)) ||
                                (p.age < cfg.child_age) != p.has_tag(PopulationKind::child_below_age) ||
                                (p.age >= cfg.elderly_age) != p.has_tag(PopulationKind::elderly_above_age);
            const auto* dis = store.find_disease(p.current_disease);
            if (!dis || !admits(*dis, p)) inconsistent = true;
            if (inconsistent) r.consistency_violations.push_back(p.id);

            bool ddi = false;
            for (const auto& t : p.ground_truth_drugs)
                for (const auto& c : p.concomitant_drugs) ddi = ddi || store.has_ddi(t, c);
            if (ddi) r.ddi_violations.push_back(p.id);

            bool unsafe = false;
            for (const auto* list : {&p.ground_truth_drugs, &p.concomitant_drugs})
                for (const auto& d : *list) unsafe = unsafe || store.violates_safe_use(d, p);
            if (unsafe) r.safe_use_violations.push_back(p.id);
        }
    for (const auto& [id, n] : usage) {
        ++r.disease_usage_histogram[n];
        r.max_disease_usage = std::max(r.max_disease_usage, n);
        if (n > cfg.max_patients_per_disease) r.usage_violations.push_back(id);
    }
    r.quotas_audited = r.total >= static_cast<std::size_t>(cfg.quota_audit_min_n);
    if (r.quotas_audited) {
        const double n = static_cast<double>(r.total);
        for (auto [name, count, target] :
             {std::tuple{"pregnant", r.pregnant, cfg.quotas.pregnant},
              {"breastfeeding", r.breastfeeding, cfg.quotas.breastfeeding},
              {"reduced_liver", r.reduced_liver, cfg.quotas.reduced_liver},
              {"reduced_renal", r.reduced_renal, cfg.quotas.reduced_renal},
              {"allergies", r.allergies, cfg.quotas.allergies}})
            if (std::abs(static_cast<double>(count) / n - target) > cfg.quota_tolerance)
                r.quota_violations.push_back(name);
    }
    r.passed = r.ddi_violations.empty() && r.safe_use_violations.empty() && r.usage_violations.empty() &&
               r.consistency_violations.empty() && r.quota_violations.empty() &&
               r.split_sizes == r.expected_split_sizes;
    return r;
}

json AuditReport::to_json(const GenConfig& cfg) const {
    const double n = total ? static_cast<double>(total) : 1.0;
    auto quota = [&](std::size_t count, double target) {
        return json{{"count", count}, {"fraction", static_cast<double>(count) / n}, {"target", target}};
    };
    json hist = json::object();
    for (const auto& [k, v] : disease_usage_histogram) hist[std::to_string(k)] = v;
    json skipped_json = json::array();
    for (const auto& s : skipped) skipped_json.push_back({{"id", s.id}, {"reason", s.reason}});
    return {{"passed", passed},
            {"total", total},
            {"splits",
             {{"train", split_sizes[0]},
              {"dev", split_sizes[1]},
              {"test", split_sizes[2]},
              {"expected", expected_split_sizes}}},
            {"sex", {{"male", male}, {"female", female}}},
            {"children_below_" + std::to_string(cfg.child_age), children},
            {"elderly_" + std::to_string(cfg.elderly_age) + "_and_over", elderly},
            {"quotas",
             {{"pregnant", quota(pregnant, cfg.quotas.pregnant)},
              {"breastfeeding", quota(breastfeeding, cfg.quotas.breastfeeding)},
              {"reduced_liver", quota(reduced_liver, cfg.quotas.reduced_liver)},
              {"reduced_renal", quota(reduced_renal, cfg.quotas.reduced_renal)},
              {"allergies", quota(allergies, cfg.quotas.allergies)},
              {"audited", quotas_audited},
              {"tolerance", cfg.quota_tolerance},
              {"violations", quota_violations}}},
            {"disease_usage", {{"histogram", hist}, {"max", max_disease_usage}, {"violations", usage_violations}}},
            {"ddi_violations", ddi_violations},
            {"safe_use_violations", safe_use_violations},
            {"consistency_violations", consistency_violations},
            {"skipped", skipped_json}};
}

std::string AuditReport::summary() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "patients %zu (train %zu, dev %zu, test %zu)\n"
                  "male %zu, female %zu, children %zu, elderly %zu\n"
                  "pregnant %zu, breastfeeding %zu, reduced liver %zu, reduced renal %zu, allergies %zu\n"
                  "max patients per disease %d, skipped %zu\n"
                  "violations: ddi %zu, safe-use %zu, usage %zu, consistency %zu, quota %zu\n"
                  "audit %s\n",
                  total, split_sizes[0], split_sizes[1], split_sizes[2], male, female, children, elderly, pregnant,
                  breastfeeding, reduced_liver, reduced_renal, allergies, max_disease_usage, skipped.size(),
                  ddi_violations.size(), safe_use_violations.size(), usage_violations.size(),
                  consistency_violations.size(), quota_violations.size(), passed ? "passed" : "FAILED");
    return buf;
}

Benchmark generate_benchmark(const GenConfig& cfg, const KGStore& store, const ApplicabilityFilter& filter,
                             const SymptomGenerator& symptoms) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    UsageCounter usage;
    std::vector<PatientEHR> patients;
    std::vector<SkippedPatient> skipped;
    const std::size_t target = static_cast<std::size_t>(cfg.n_patients);
    const std::size_t max_attempts = 3 * target + 100;
    std::size_t attempts = 0;
    char idbuf[32];
    while (patients.size() < target) {
        if (++attempts > max_attempts)
            throw Error("knowledge graph exhausted: generated " + std::to_string(patients.size()) + " of " +
                        std::to_string(target) + " patients (" + std::to_string(skipped.size()) + " skipped)");
        PatientEHR p = gen_patient_base(cfg, store, rng);
        std::snprintf(idbuf, sizeof idbuf, "P%06zu", patients.size() + 1);
        p.id = idbuf;
        std::vector<std::string> tried;
        std::string reason;
        bool done = false;
        for (int attempt = 0; attempt < cfg.max_retries && !done; ++attempt) {
            std::string disease;
            try {
                disease = assign_disease(p, store, filter, usage, cfg.max_patients_per_disease, rng, tried);
            } catch (const GenerationError& e) {
                reason = e.what();
                break;
            }
            try {
                History h = gen_history_and_truth(p, disease, store, filter, cfg.concomitant_min,
                                                  cfg.concomitant_max, rng);
                p.current_disease = disease;
                p.concomitant_drugs = std::move(h.concomitant);
                p.past_diseases = std::move(h.past_diseases);
                p.ground_truth_drugs = std::move(h.truth);
                p.symptoms = gen_symptoms(p, store.disease(disease), symptoms);
                done = true;
            } catch (const GenerationError& e) {
                --usage[disease];
                tried.push_back(disease);
                reason = e.what();
            }
        }
        if (done)
            patients.push_back(std::move(p));
        else
            skipped.push_back({"attempt " + std::to_string(attempts) + " (age " + std::to_string(p.age) + ", " +
                                   std::string(to_string(p.sex)) + ")",
                               reason});
    }

    std::shuffle(patients.begin(), patients.end(), rng);
    auto sizes = split_sizes(patients.size(), cfg.split);
    Benchmark b;
    auto it = std::make_move_iterator(patients.begin());
    b.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    b.dev.assign(it + static_cast<std::ptrdiff_t>(sizes[0]), it + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
    b.test.assign(it + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), std::make_move_iterator(patients.end()));
    b.report = audit_benchmark(b, store, cfg);
    b.report.skipped = std::move(skipped);
    return b;
}

void write_benchmark(const Benchmark& b, const GenConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_patients_jsonl((dir / "train.jsonl").string(), b.train);
    write_patients_jsonl((dir / "dev.jsonl").string(), b.dev);
    write_patients_jsonl((dir / "test.jsonl").string(), b.test);
    std::ofstream out(dir / "audit.json");
    if (!out) throw Error("cannot write " + (dir / "audit.json").string());
    out << b.report.to_json(cfg).dump(2) << '\n';
}

}  // namespace tracedr
