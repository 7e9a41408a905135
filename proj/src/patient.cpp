#include "tracedr/patient.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

std::string_view to_string(Sex sex) { return sex == Sex::male ? "male" : "female"; }

Sex parse_sex(std::string_view s) {
    if (s == "male") return Sex::male;
    if (s == "female") return Sex::female;
    throw ParseError("sex must be \"male\" or \"female\", got \"" + std::string(s) + "\"");
}

std::string PopulationTag::code() const {
    switch (kind) {
        case PopulationKind::pregnant: return "pregnant";
        case PopulationKind::breastfeeding: return "breastfeeding";
        case PopulationKind::reduced_liver: return "reduced_liver";
        case PopulationKind::reduced_renal: return "reduced_renal";
        case PopulationKind::child_below_age: return "child_below_age:" + std::to_string(age);
        case PopulationKind::elderly_above_age: return "elderly_above_age:" + std::to_string(age);
    }
    return {};
}

std::string PopulationTag::text() const {
    switch (kind) {
        case PopulationKind::pregnant: return "pregnant";
        case PopulationKind::breastfeeding: return "breastfeeding";
        case PopulationKind::reduced_liver: return "reduced liver function";
        case PopulationKind::reduced_renal: return "reduced renal function";
        case PopulationKind::child_below_age: return "child under " + std::to_string(age);
        case PopulationKind::elderly_above_age: return "elderly " + std::to_string(age) + " and over";
    }
    return {};
}

namespace {

int parse_age_suffix(std::string_view code, std::string_view prefix) {
    auto rest = code.substr(prefix.size());
    int value = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
    if (ec != std::errc{} || ptr != rest.data() + rest.size() || value < 0)
        throw ParseError("bad age threshold in population tag \"" + std::string(code) + "\"");
    return value;
}

}  // namespace

PopulationTag PopulationTag::parse(std::string_view code) {
    if (code == "pregnant") return pregnant();
    if (code == "breastfeeding") return breastfeeding();
    if (code == "reduced_liver") return reduced_liver();
    if (code == "reduced_renal") return reduced_renal();
    constexpr std::string_view child = "child_below_age:";
    constexpr std::string_view elderly = "elderly_above_age:";
    if (code.starts_with(child)) return child_below(parse_age_suffix(code, child));
    if (code.starts_with(elderly)) return elderly_above(parse_age_suffix(code, elderly));
    throw ParseError("unknown population tag \"" + std::string(code) + "\"");
}

std::string population_condition_id(const PopulationTag& tag) {
    return std::string(kPopulationIdPrefix) + tag.code();
}

std::optional<PopulationTag> parse_population_condition(std::string_view id) {
    if (!id.starts_with(kPopulationIdPrefix)) return std::nullopt;
    try {
        return PopulationTag::parse(id.substr(kPopulationIdPrefix.size()));
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

bool PatientEHR::has_tag(PopulationKind kind) const {
    return std::any_of(population_tags.begin(), population_tags.end(),
                       [kind](const PopulationTag& t) { return t.kind == kind; });
}

bool in_population(const PatientEHR& patient, const PopulationTag& tag) {
    switch (tag.kind) {
        case PopulationKind::child_below_age: return patient.age < tag.age;
        case PopulationKind::elderly_above_age: return patient.age >= tag.age;
        default: return patient.has_tag(tag.kind);
    }
}

json to_json(const PatientEHR& p) {
    json tags = json::array();
    for (const auto& t : p.population_tags) tags.push_back(t.code());
    json j = {
        {"id", p.id},
        {"age", p.age},
        {"sex", std::string(to_string(p.sex))},
        {"population_tags", tags},
        {"allergies", p.allergies},
        {"current_disease", p.current_disease},
        {"symptoms", p.symptoms},
        {"past_diseases", p.past_diseases},
        {"concomitant_drugs", p.concomitant_drugs},
        {"ground_truth_drugs", p.ground_truth_drugs},
    };
    return j;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return out;
    if (!it->is_array()) throw ParseError(std::string("field '") + key + "' must be an array of strings");
    for (const auto& v : *it) {
        if (!v.is_string()) throw ParseError(std::string("field '") + key + "' must contain only strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

PatientEHR patient_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("patient must be a JSON object");
    PatientEHR p;
    if (auto it = j.find("id"); it != j.end() && it->is_string()) p.id = it->get<std::string>();

    auto age = j.find("age");
    if (age == j.end() || !age->is_number_integer()) throw ParseError("field 'age' must be an integer");
    p.age = age->get<int>();
    if (p.age < 0) throw ParseError("field 'age' must be >= 0");

    auto sex = j.find("sex");
    if (sex == j.end() || !sex->is_string()) throw ParseError("field 'sex' must be \"male\" or \"female\"");
    try {
        p.sex = parse_sex(sex->get<std::string>());
    } catch (const ParseError& e) {
        throw ParseError(std::string("field 'sex': ") + e.what());
    }

    for (const auto& code : string_list(j, "population_tags")) {
        try {
            p.population_tags.push_back(PopulationTag::parse(code));
        } catch (const ParseError& e) {
            throw ParseError(std::string("field 'population_tags': ") + e.what());
        }
    }
    p.allergies = string_list(j, "allergies");

    auto disease = j.find("current_disease");
    if (disease == j.end() || !disease->is_string() || disease->get<std::string>().empty())
        throw ParseError("field 'current_disease' must be a non-empty string");
    p.current_disease = disease->get<std::string>();

    p.symptoms = string_list(j, "symptoms");
    p.past_diseases = string_list(j, "past_diseases");
    p.concomitant_drugs = string_list(j, "concomitant_drugs");
    p.ground_truth_drugs = string_list(j, "ground_truth_drugs");
    return p;
}

std::vector<PatientEHR> read_patients_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open patient file " + path);
    std::vector<PatientEHR> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(patient_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(e.what(), line_no);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

void write_patients_jsonl(const std::string& path, const std::vector<PatientEHR>& patients) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    for (const auto& p : patients) out << to_json(p).dump() << '\n';
}

}  // namespace tracedr
