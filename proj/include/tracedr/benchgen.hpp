#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tracedr/errors.hpp"
#include "tracedr/kg_store.hpp"
#include "tracedr/patient.hpp"

namespace tracedr {

/// Ages are uniform inside a band; bands are picked by weight.
struct AgeBand {
    int lo = 0;  // inclusive
    int hi = 0;  // inclusive
    double weight = 0.0;
};

/// Target population fractions over the whole benchmark.
struct Quotas {
    double pregnant = 0.035;
    double breastfeeding = 0.054;
    double reduced_liver = 0.029;
    double reduced_renal = 0.094;
    double allergies = 0.20;
};

struct GenConfig {
    int n_patients = 1000;
    double male_fraction = 0.5;
    Quotas quotas;
    int max_patients_per_disease = 2;
    int concomitant_min = 1;
    int concomitant_max = 3;
    std::array<int, 3> split{60, 20, 20};
    std::vector<AgeBand> age_table = default_age_table();
    int max_retries = 20;
    int child_age = 12;    // child: age < child_age
    int elderly_age = 65;  // elderly: age >= elderly_age
    /// Quota attainment is audited only from this size on.
    int quota_audit_min_n = 5000;
    double quota_tolerance = 0.015;
    std::uint64_t seed = 0;

    /// A pyramid-shaped synthetic population (weights sum to 1).
    static std::vector<AgeBand> default_age_table();

    /// Throws InvalidArgument on quotas outside [0,1], split not summing to
    /// 100 or quotas unreachable under the eligibility rules.
    void validate() const;
    nlohmann::json to_json() const;
    static GenConfig from_json(const nlohmann::json& j);
    static GenConfig from_json(const nlohmann::json& j, GenConfig base);
};

/// A patient could not be completed (no applicable disease, empty truth).
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Judges whether a disease is plausible for a patient.
class ApplicabilityFilter {
public:
    virtual ~ApplicabilityFilter() = default;
    virtual bool applicable(const PatientEHR& patient, const DiseaseRecord& disease) const = 0;
    virtual std::string name() const = 0;
};

/// Demographic constraints from the KG plus keyword rules on the label
/// (sex-specific organs, pregnancy, age words).
class RuleApplicabilityFilter final : public ApplicabilityFilter {
public:
    bool applicable(const PatientEHR& patient, const DiseaseRecord& disease) const override;
    std::string name() const override { return "rules"; }
};

class SymptomGenerator {
public:
    virtual ~SymptomGenerator() = default;
    /// Never empty.
    virtual std::vector<std::string> generate(const PatientEHR& patient, const DiseaseRecord& disease) const = 0;
    virtual std::string name() const = 0;
};

/// Symptoms from a fixed lexicon: whole-label entries first, then words of
/// the label. The choice depends only on (seed, disease).
class LexiconSymptomGenerator final : public SymptomGenerator {
public:
    explicit LexiconSymptomGenerator(std::uint64_t seed = 0) : seed_(seed) {}
    std::vector<std::string> generate(const PatientEHR& patient, const DiseaseRecord& disease) const override;
    std::string name() const override { return "lexicon"; }

private:
    std::uint64_t seed_;
};

/// Demographics and special populations. Pregnancy and breastfeeding are
/// drawn conditionally on eligibility (female, 18-45 / 18-50, mutually
/// exclusive) so their overall rates hit the quotas in expectation.
PatientEHR gen_patient_base(const GenConfig& cfg, const KGStore& store, std::mt19937_64& rng);

/// Disease usage per id.
using UsageCounter = std::unordered_map<std::string, int>;

/// Uniform among diseases that have a treating drug, are below the usage
/// cap, are not in `exclude`, and pass both the KG constraints and `filter`.
/// Increments the counter. Throws GenerationError when none qualifies.
std::string assign_disease(const PatientEHR& patient, const KGStore& store, const ApplicabilityFilter& filter,
                           UsageCounter& usage, int max_per_disease, std::mt19937_64& rng,
                           const std::vector<std::string>& exclude = {});

std::vector<std::string> gen_symptoms(const PatientEHR& patient, const DiseaseRecord& disease,
                                      const SymptomGenerator& generator);

struct History {
    std::vector<std::string> concomitant;
    std::vector<std::string> past_diseases;
    std::vector<std::string> truth;
};

/// Samples concomitant drugs interacting with the disease's treatments and
/// prunes the treatments to a ground truth. Throws GenerationError when the
/// disease has no treatment, no drug qualifies as concomitant, or pruning
/// leaves nothing.
History gen_history_and_truth(const PatientEHR& patient, const std::string& disease_id, const KGStore& store,
                              const ApplicabilityFilter& filter, int concomitant_min, int concomitant_max,
                              std::mt19937_64& rng);

struct SkippedPatient {
    std::string id;
    std::string reason;
};

struct AuditReport {
    std::size_t total = 0;
    std::array<std::size_t, 3> split_sizes{};
    std::array<std::size_t, 3> expected_split_sizes{};
    std::size_t male = 0, female = 0;
    std::size_t children = 0, elderly = 0;
    std::size_t pregnant = 0, breastfeeding = 0, reduced_liver = 0, reduced_renal = 0, allergies = 0;
    std::map<int, std::size_t> disease_usage_histogram;  // patients per disease -> diseases
    int max_disease_usage = 0;
    std::vector<std::string> ddi_violations;       // patient ids
    std::vector<std::string> safe_use_violations;  // patient ids
    std::vector<std::string> usage_violations;     // disease ids
    std::vector<std::string> consistency_violations;  // patient ids
    bool quotas_audited = false;
    std::vector<std::string> quota_violations;  // quota names
    std::vector<SkippedPatient> skipped;
    bool passed = false;

    nlohmann::json to_json(const GenConfig& cfg) const;
    std::string summary() const;
};

struct Benchmark {
    std::vector<PatientEHR> train, dev, test;
    AuditReport report;
};

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<int, 3>& split);

/// Post-hoc audits over a finished benchmark.
AuditReport audit_benchmark(const Benchmark& b, const KGStore& store, const GenConfig& cfg);

/// Generates cfg.n_patients records, shuffles them into train/dev/test and audits.
Benchmark generate_benchmark(const GenConfig& cfg, const KGStore& store, const ApplicabilityFilter& filter,
                             const SymptomGenerator& symptoms);

/// train.jsonl, dev.jsonl, test.jsonl and audit.json under `dir`.
void write_benchmark(const Benchmark& b, const GenConfig& cfg, const std::filesystem::path& dir);

}  // namespace tracedr
