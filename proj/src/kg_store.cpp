#include "tracedr/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

std::string_view to_string(SafeUseAction action) {
    return action == SafeUseAction::forbid ? "forbid" : "caution";
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

bool DemographicConstraints::admits(int age, Sex s) const {
    if (sex && *sex != s) return false;
    if (min_age && age < *min_age) return false;
    if (max_age && age > *max_age) return false;
    return true;
}

namespace {

void dedupe_in_place(std::vector<std::string>& v) {
    std::unordered_set<std::string> seen;
    std::erase_if(v, [&](const std::string& s) { return !seen.insert(s).second; });
}

}  // namespace

KGStore KGStore::from_records(std::vector<DrugRecord> drugs, std::vector<DiseaseRecord> diseases,
                              std::vector<IngredientRecord> ingredients) {
    KGStore s;
    s.drugs_ = std::move(drugs);
    s.diseases_ = std::move(diseases);
    s.ingredients_ = std::move(ingredients);

    std::unordered_set<std::string> all_ids;
    auto claim = [&](const std::string& id, const char* kind) {
        if (id.empty()) throw LoadError(std::string("empty id in ") + kind + " record");
        if (!all_ids.insert(id).second) throw LoadError("duplicate id \"" + id + "\" (" + kind + ")");
    };
    for (std::size_t i = 0; i < s.diseases_.size(); ++i) {
        claim(s.diseases_[i].id, "disease");
        s.disease_pos_.emplace(s.diseases_[i].id, i);
    }
    for (std::size_t i = 0; i < s.ingredients_.size(); ++i) {
        claim(s.ingredients_[i].id, "ingredient");
        s.ingredient_pos_.emplace(s.ingredients_[i].id, i);
    }
    for (std::size_t i = 0; i < s.drugs_.size(); ++i) {
        claim(s.drugs_[i].id, "drug");
        s.drug_pos_.emplace(s.drugs_[i].id, i);
    }

    // Drop unresolvable references, remembering them.
    for (auto& d : s.drugs_) {
        auto prune = [&](std::vector<std::string>& refs, auto&& resolves) {
            dedupe_in_place(refs);
            std::erase_if(refs, [&](const std::string& id) {
                if (resolves(id)) return false;
                s.dangling_.push_back({"drug", id, d.id});
                return true;
            });
        };
        prune(d.treatments, [&](const std::string& id) { return s.disease_pos_.contains(id); });
        prune(d.ingredients, [&](const std::string& id) { return s.ingredient_pos_.contains(id); });
        prune(d.contraindications, [&](const std::string& id) {
            return s.disease_pos_.contains(id) || parse_population_condition(id).has_value();
        });
        prune(d.interactions, [&](const std::string& id) { return s.drug_pos_.contains(id); });
        std::erase(d.interactions, d.id);
    }

    // Symmetric closure of DDI.
    std::vector<std::vector<std::uint32_t>> partners(s.drugs_.size());
    for (std::size_t i = 0; i < s.drugs_.size(); ++i) {
        for (const auto& other : s.drugs_[i].interactions) {
            auto j = s.drug_pos_.at(other);
            partners[i].push_back(static_cast<std::uint32_t>(j));
            partners[j].push_back(static_cast<std::uint32_t>(i));
        }
    }
    for (std::size_t i = 0; i < s.drugs_.size(); ++i) {
        auto& p = partners[i];
        std::sort(p.begin(), p.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        auto& declared = s.drugs_[i].interactions;
        std::unordered_set<std::string> have(declared.begin(), declared.end());
        for (auto j : p)
            if (!have.contains(s.drugs_[j].id)) declared.push_back(s.drugs_[j].id);
    }
    s.ddi_ = std::move(partners);
    s.build_indexes();
    return s;
}

void KGStore::build_indexes() {
    by_label_.clear();
    treating_.clear();
    for (const auto& d : diseases_) by_label_[ascii_lower(d.label)].push_back(d.id);
    for (const auto& g : ingredients_) by_label_[ascii_lower(g.label)].push_back(g.id);
    for (const auto& d : drugs_) {
        by_label_[ascii_lower(d.label)].push_back(d.id);
        for (const auto& t : d.treatments) treating_[t].push_back(d.id);
    }
}

namespace {

std::vector<std::string> id_list(const json& j, const char* key) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return out;
    if (!it->is_array()) throw ParseError(std::string("'") + key + "' must be an array");
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(std::string("'") + key + "' must contain strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::string required_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) throw ParseError(std::string("missing string field '") + key + "'");
    return it->get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) throw ParseError(std::string("'") + key + "' must be a string");
    return it->get<std::string>();
}

SafeUseRule parse_rule(const json& j) {
    if (!j.is_object()) throw ParseError("population rule must be an object");
    SafeUseRule r;
    r.population = PopulationTag::parse(required_string(j, "population"));
    auto action = required_string(j, "action");
    if (action == "forbid")
        r.action = SafeUseAction::forbid;
    else if (action == "caution")
        r.action = SafeUseAction::caution;
    else
        throw ParseError("rule action must be forbid or caution, got \"" + action + "\"");
    return r;
}

json drug_json(const DrugRecord& d) {
    json rules = json::array();
    for (const auto& r : d.population_rules)
        rules.push_back({{"population", r.population.code()}, {"action", std::string(to_string(r.action))}});
    auto sorted = [](std::vector<std::string> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    return {
        {"kind", "drug"},
        {"id", d.id},
        {"label", d.label},
        {"treatments", d.treatments},
        {"ingredients", d.ingredients},
        {"contraindications", d.contraindications},
        {"interactions", sorted(d.interactions)},
        {"usage", d.usage},
        {"adverse_reactions", d.adverse_reactions},
        {"population_rules", rules},
    };
}

json disease_json(const DiseaseRecord& d) {
    json j = {{"kind", "disease"}, {"id", d.id}, {"label", d.label}};
    if (d.constraints) {
        json c = json::object();
        if (d.constraints->sex) c["sex"] = std::string(to_string(*d.constraints->sex));
        if (d.constraints->min_age) c["min_age"] = *d.constraints->min_age;
        if (d.constraints->max_age) c["max_age"] = *d.constraints->max_age;
        j["demographic_constraints"] = c;
    }
    return j;
}

}  // namespace

json to_json(const DrugRecord& d) { return drug_json(d); }
json to_json(const DiseaseRecord& d) { return disease_json(d); }

KGStore KGStore::from_jsonl(std::istream& in) {
    std::vector<DrugRecord> drugs;
    std::vector<DiseaseRecord> diseases;
    std::vector<IngredientRecord> ingredients;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            if (!j.is_object()) throw ParseError("record must be a JSON object");
            auto kind = required_string(j, "kind");
            if (kind == "drug") {
                DrugRecord d;
                d.id = required_string(j, "id");
                d.label = required_string(j, "label");
                d.treatments = id_list(j, "treatments");
                d.ingredients = id_list(j, "ingredients");
                d.contraindications = id_list(j, "contraindications");
                d.interactions = id_list(j, "interactions");
                d.usage = optional_string(j, "usage");
                d.adverse_reactions = optional_string(j, "adverse_reactions");
                if (auto it = j.find("population_rules"); it != j.end() && !it->is_null()) {
                    if (!it->is_array()) throw ParseError("'population_rules' must be an array");
                    for (const auto& r : *it) d.population_rules.push_back(parse_rule(r));
                }
                drugs.push_back(std::move(d));
            } else if (kind == "disease") {
                DiseaseRecord d;
                d.id = required_string(j, "id");
                d.label = required_string(j, "label");
                if (auto it = j.find("demographic_constraints"); it != j.end() && !it->is_null()) {
                    DemographicConstraints c;
                    if (auto s = it->find("sex"); s != it->end()) c.sex = parse_sex(s->get<std::string>());
                    if (auto a = it->find("min_age"); a != it->end()) c.min_age = a->get<int>();
                    if (auto a = it->find("max_age"); a != it->end()) c.max_age = a->get<int>();
                    d.constraints = c;
                }
                diseases.push_back(std::move(d));
            } else if (kind == "ingredient") {
                IngredientRecord g;
                g.id = required_string(j, "id");
                g.label = required_string(j, "label");
                if (auto it = j.find("is_allergen"); it != j.end()) g.is_allergen = it->get<bool>();
                ingredients.push_back(std::move(g));
            } else {
                throw ParseError("unknown record kind \"" + kind + "\"");
            }
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        } catch (const json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return from_records(std::move(drugs), std::move(diseases), std::move(ingredients));
}

void KGStore::write_jsonl(std::ostream& out) const {
    auto by_id = [](const auto* a, const auto* b) { return a->id < b->id; };
    std::vector<const DiseaseRecord*> ds;
    for (const auto& d : diseases_) ds.push_back(&d);
    std::sort(ds.begin(), ds.end(), by_id);
    for (const auto* d : ds) out << disease_json(*d).dump() << '\n';

    std::vector<const IngredientRecord*> gs;
    for (const auto& g : ingredients_) gs.push_back(&g);
    std::sort(gs.begin(), gs.end(), by_id);
    for (const auto* g : gs)
        out << json{{"kind", "ingredient"}, {"id", g->id}, {"label", g->label}, {"is_allergen", g->is_allergen}}.dump()
            << '\n';

    std::vector<const DrugRecord*> drs;
    for (const auto& d : drugs_) drs.push_back(&d);
    std::sort(drs.begin(), drs.end(), by_id);
    for (const auto* d : drs) out << drug_json(*d).dump() << '\n';
}

bool KGStore::operator==(const KGStore& other) const {
    auto sorted = [](auto v) {
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        return v;
    };
    auto norm_drugs = [&](std::vector<DrugRecord> v) {
        for (auto& d : v) std::sort(d.interactions.begin(), d.interactions.end());
        return sorted(std::move(v));
    };
    return norm_drugs(drugs_) == norm_drugs(other.drugs_) && sorted(diseases_) == sorted(other.diseases_) &&
           sorted(ingredients_) == sorted(other.ingredients_);
}

const DrugRecord* KGStore::find_drug(std::string_view id) const {
    auto it = drug_pos_.find(std::string(id));
    return it == drug_pos_.end() ? nullptr : &drugs_[it->second];
}

const DiseaseRecord* KGStore::find_disease(std::string_view id) const {
    auto it = disease_pos_.find(std::string(id));
    return it == disease_pos_.end() ? nullptr : &diseases_[it->second];
}

const IngredientRecord* KGStore::find_ingredient(std::string_view id) const {
    auto it = ingredient_pos_.find(std::string(id));
    return it == ingredient_pos_.end() ? nullptr : &ingredients_[it->second];
}

const DrugRecord& KGStore::drug(std::string_view id) const {
    if (auto* d = find_drug(id)) return *d;
    throw NotFoundError("unknown drug id \"" + std::string(id) + "\"");
}

const DiseaseRecord& KGStore::disease(std::string_view id) const {
    if (auto* d = find_disease(id)) return *d;
    throw NotFoundError("unknown disease id \"" + std::string(id) + "\"");
}

const IngredientRecord& KGStore::ingredient(std::string_view id) const {
    if (auto* g = find_ingredient(id)) return *g;
    throw NotFoundError("unknown ingredient id \"" + std::string(id) + "\"");
}

std::optional<std::size_t> KGStore::drug_index(std::string_view id) const {
    auto it = drug_pos_.find(std::string(id));
    if (it == drug_pos_.end()) return std::nullopt;
    return it->second;
}

std::optional<EntityKind> KGStore::kind_of(std::string_view id) const {
    std::string key(id);
    if (drug_pos_.contains(key)) return EntityKind::drug;
    if (disease_pos_.contains(key)) return EntityKind::disease;
    if (ingredient_pos_.contains(key)) return EntityKind::ingredient;
    if (parse_population_condition(id)) return EntityKind::population;
    return std::nullopt;
}

std::string KGStore::label_of(std::string_view id) const {
    if (auto* d = find_drug(id)) return d->label;
    if (auto* d = find_disease(id)) return d->label;
    if (auto* g = find_ingredient(id)) return g->label;
    if (auto tag = parse_population_condition(id)) return tag->text();
    throw NotFoundError("unknown entity id \"" + std::string(id) + "\"");
}

std::vector<std::string> KGStore::find_by_label(std::string_view label) const {
    auto it = by_label_.find(ascii_lower(label));
    return it == by_label_.end() ? std::vector<std::string>{} : it->second;
}

const std::vector<std::string>& KGStore::drugs_treating(std::string_view disease_id) const {
    static const std::vector<std::string> none;
    auto it = treating_.find(std::string(disease_id));
    return it == treating_.end() ? none : it->second;
}

EvidenceText KGStore::verbalize(std::string_view drug_id) const {
    const auto& d = drug(drug_id);
    EvidenceText ev;
    ev.drug_id = d.id;
    std::unordered_set<std::string> seen;
    auto section = [&](std::string_view header, const std::vector<std::string>& ids,
                       const std::vector<std::string>& extra) {
        std::string body;
        for (const auto& id : ids) {
            if (!body.empty()) body += ", ";
            body += label_of(id);
            if (seen.insert(id).second) ev.mentioned_entities.push_back(id);
        }
        for (const auto& e : extra) {
            if (!body.empty()) body += ", ";
            body += e;
        }
        std::string out(header);
        out += ':';
        if (!body.empty()) out += ' ' + body;
        return out;
    };
    std::vector<std::string> rules;
    for (const auto& r : d.population_rules)
        rules.push_back(r.population.text() + (r.action == SafeUseAction::forbid ? " (forbidden)" : " (caution)"));

    ev.text = section("Treatments", d.treatments, {});
    ev.text += " | " + section("Contraindications", d.contraindications, rules);
    ev.text += " | " + section("Ingredients", d.ingredients, {});
    return ev;
}

bool KGStore::has_ddi(std::string_view a, std::string_view b) const {
    auto ia = drug_index(a);
    if (!ia) throw NotFoundError("unknown drug id \"" + std::string(a) + "\"");
    auto ib = drug_index(b);
    if (!ib) throw NotFoundError("unknown drug id \"" + std::string(b) + "\"");
    const auto& partners = ddi_[*ia];
    return std::binary_search(partners.begin(), partners.end(), static_cast<std::uint32_t>(*ib));
}

bool KGStore::violates_safe_use(std::string_view drug_id, const PatientEHR& patient) const {
    const auto& d = drug(drug_id);
    for (const auto& r : d.population_rules)
        if (r.action == SafeUseAction::forbid && in_population(patient, r.population)) return true;
    for (const auto& allergen : patient.allergies) {
        if (allergen == d.id) return true;
        if (std::find(d.ingredients.begin(), d.ingredients.end(), allergen) != d.ingredients.end()) return true;
    }
    return false;
}

KGStore load_kg(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open KG file " + path.string());
    return KGStore::from_jsonl(in);
}

void save_kg(const KGStore& store, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write KG file " + path.string());
    store.write_jsonl(out);
}

}  // namespace tracedr
