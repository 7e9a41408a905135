#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tracedr {

enum class Sex { male, female };

std::string_view to_string(Sex sex);
Sex parse_sex(std::string_view s);

enum class PopulationKind {
    pregnant,
    breastfeeding,
    reduced_liver,
    reduced_renal,
    child_below_age,
    elderly_above_age,
};

/// A special-population condition. `age` is the threshold for the two
/// age-band kinds and 0 otherwise.
struct PopulationTag {
    PopulationKind kind = PopulationKind::pregnant;
    int age = 0;

    static PopulationTag pregnant() { return {PopulationKind::pregnant, 0}; }
    static PopulationTag breastfeeding() { return {PopulationKind::breastfeeding, 0}; }
    static PopulationTag reduced_liver() { return {PopulationKind::reduced_liver, 0}; }
    static PopulationTag reduced_renal() { return {PopulationKind::reduced_renal, 0}; }
    static PopulationTag child_below(int years) { return {PopulationKind::child_below_age, years}; }
    static PopulationTag elderly_above(int years) { return {PopulationKind::elderly_above_age, years}; }

    /// Machine code, e.g. "pregnant" or "child_below_age:12".
    std::string code() const;
    /// Human-readable text used in serialized patients and evidence.
    std::string text() const;
    static PopulationTag parse(std::string_view code);

    auto operator<=>(const PopulationTag&) const = default;
};

/// Prefix of contraindication ids that name a population instead of a disease.
inline constexpr std::string_view kPopulationIdPrefix = "population:";

std::string population_condition_id(const PopulationTag& tag);
std::optional<PopulationTag> parse_population_condition(std::string_view id);

/// Synthetic or real patient record. `ground_truth_drugs` is empty at inference.
struct PatientEHR {
    std::string id;
    int age = 0;
    Sex sex = Sex::female;
    std::vector<PopulationTag> population_tags;
    std::vector<std::string> allergies;
    std::string current_disease;
    std::vector<std::string> symptoms;
    std::vector<std::string> past_diseases;
    std::vector<std::string> concomitant_drugs;
    std::vector<std::string> ground_truth_drugs;

    bool has_tag(PopulationKind kind) const;
    bool operator==(const PatientEHR&) const = default;
};

/// True when the patient falls in the population. Age bands are decided by
/// age alone (child: age < n, elderly: age >= n); the others by tag.
bool in_population(const PatientEHR& patient, const PopulationTag& tag);

nlohmann::json to_json(const PatientEHR& p);
/// Throws ParseError naming the offending field.
PatientEHR patient_from_json(const nlohmann::json& j);

std::vector<PatientEHR> read_patients_jsonl(const std::string& path);
void write_patients_jsonl(const std::string& path, const std::vector<PatientEHR>& patients);

}  // namespace tracedr
