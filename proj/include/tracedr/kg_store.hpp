#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tracedr/patient.hpp"

namespace tracedr {

enum class SafeUseAction { forbid, caution };

std::string_view to_string(SafeUseAction action);

struct SafeUseRule {
    PopulationTag population;
    SafeUseAction action = SafeUseAction::forbid;

    bool operator==(const SafeUseRule&) const = default;
};

struct DrugRecord {
    std::string id;
    std::string label;
    std::vector<std::string> treatments;         // disease ids
    std::vector<std::string> ingredients;        // ingredient ids
    std::vector<std::string> contraindications;  // disease ids or population condition ids
    std::vector<std::string> interactions;       // drug ids
    std::string usage;
    std::string adverse_reactions;
    std::vector<SafeUseRule> population_rules;

    bool operator==(const DrugRecord&) const = default;
};

struct DemographicConstraints {
    std::optional<Sex> sex;
    std::optional<int> min_age;  // inclusive
    std::optional<int> max_age;  // inclusive

    bool admits(int age, Sex s) const;
    bool operator==(const DemographicConstraints&) const = default;
};

struct DiseaseRecord {
    std::string id;
    std::string label;
    std::optional<DemographicConstraints> constraints;

    bool operator==(const DiseaseRecord&) const = default;
};

struct IngredientRecord {
    std::string id;
    std::string label;
    bool is_allergen = false;

    bool operator==(const IngredientRecord&) const = default;
};

/// Verbalized KG facts of one drug.
struct EvidenceText {
    std::string drug_id;
    std::string text;
    std::vector<std::string> mentioned_entities;

    bool operator==(const EvidenceText&) const = default;
};

/// A reference to an id that does not resolve. `kind` is the kind of the
/// referencing record ("drug"), `source` its id.
struct DanglingReference {
    std::string kind;
    std::string id;
    std::string source;

    bool operator==(const DanglingReference&) const = default;
};

enum class EntityKind { drug, disease, ingredient, population };

/// In-memory medical knowledge graph. Immutable after construction.
///
/// Construction symmetrizes drug-drug interactions, drops self interactions
/// and duplicate list entries, and removes references to unknown ids after
/// recording them in `dangling()`.
class KGStore {
public:
    KGStore() = default;
    static KGStore from_records(std::vector<DrugRecord> drugs, std::vector<DiseaseRecord> diseases,
                                std::vector<IngredientRecord> ingredients);
    /// Parses JSONL. Throws ParseError (with line number) or LoadError on duplicate ids.
    static KGStore from_jsonl(std::istream& in);

    /// Order-normalized JSONL: diseases, ingredients, drugs, each sorted by id.
    void write_jsonl(std::ostream& out) const;

    const std::vector<DrugRecord>& drugs() const { return drugs_; }
    const std::vector<DiseaseRecord>& diseases() const { return diseases_; }
    const std::vector<IngredientRecord>& ingredients() const { return ingredients_; }
    const std::vector<DanglingReference>& dangling() const { return dangling_; }
    std::size_t size() const { return drugs_.size() + diseases_.size() + ingredients_.size(); }

    const DrugRecord* find_drug(std::string_view id) const;
    const DiseaseRecord* find_disease(std::string_view id) const;
    const IngredientRecord* find_ingredient(std::string_view id) const;
    const DrugRecord& drug(std::string_view id) const;
    const DiseaseRecord& disease(std::string_view id) const;
    const IngredientRecord& ingredient(std::string_view id) const;
    std::optional<std::size_t> drug_index(std::string_view id) const;

    /// Kind of any resolvable id, population condition ids included.
    std::optional<EntityKind> kind_of(std::string_view id) const;
    /// Label of any resolvable id. Throws NotFoundError.
    std::string label_of(std::string_view id) const;
    /// Ids whose lowercased label equals `label` lowercased.
    std::vector<std::string> find_by_label(std::string_view label) const;

    /// Drugs listing `disease_id` among their treatments, in store order.
    const std::vector<std::string>& drugs_treating(std::string_view disease_id) const;

    EvidenceText verbalize(std::string_view drug_id) const;
    bool has_ddi(std::string_view a, std::string_view b) const;
    bool violates_safe_use(std::string_view drug_id, const PatientEHR& patient) const;

    /// Equality after order normalization.
    bool operator==(const KGStore& other) const;

private:
    void build_indexes();

    std::vector<DrugRecord> drugs_;
    std::vector<DiseaseRecord> diseases_;
    std::vector<IngredientRecord> ingredients_;
    std::vector<DanglingReference> dangling_;

    std::unordered_map<std::string, std::size_t> drug_pos_;
    std::unordered_map<std::string, std::size_t> disease_pos_;
    std::unordered_map<std::string, std::size_t> ingredient_pos_;
    std::unordered_map<std::string, std::vector<std::string>> by_label_;
    std::unordered_map<std::string, std::vector<std::string>> treating_;
    std::vector<std::vector<std::uint32_t>> ddi_;  // sorted partner indexes per drug
};

/// Records as they appear in the JSONL file.
nlohmann::json to_json(const DrugRecord& d);
nlohmann::json to_json(const DiseaseRecord& d);

KGStore load_kg(const std::filesystem::path& path);
void save_kg(const KGStore& store, const std::filesystem::path& path);

/// ASCII lowercase; other bytes are passed through.
std::string ascii_lower(std::string_view s);

}  // namespace tracedr
