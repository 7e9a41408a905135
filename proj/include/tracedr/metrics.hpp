#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracedr/kg_store.hpp"
#include "tracedr/patient.hpp"

namespace tracedr {

struct SetMetrics {
    double jaccard = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Set overlap metrics; duplicates in either list are ignored. Precision is
/// 0 for an empty prediction. Throws InvalidArgument on empty truth.
SetMetrics set_metrics(std::span<const std::string> predicted, std::span<const std::string> truth);

/// Fraction of unordered pairs in predicted ∪ concomitant that are DDI
/// partners; 0 when the union has fewer than two drugs.
double ddi_rate(std::span<const std::string> predicted, std::span<const std::string> concomitant,
                const KGStore& store);

/// 1 when the first ranked drug is in the truth set.
double hit_at_1(std::span<const std::string> ranking, std::span<const std::string> truth);

/// Average precision of the ranking; truth items never ranked count as misses.
double average_precision(std::span<const std::string> ranking, std::span<const std::string> truth);

struct PatientMetrics {
    std::string patient_id;
    double jaccard = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double ddi = 0.0;
    double hit1 = 0.0;
    double prauc = 0.0;
    std::vector<std::string> predicted;
};

struct MetricMeans {
    double jaccard = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double ddi = 0.0;
    double hit1 = 0.0;
    double prauc = 0.0;
};

struct EvalResult {
    std::size_t k = 5;
    std::vector<PatientMetrics> per_patient;
    MetricMeans means;
    std::size_t count() const { return per_patient.size(); }
};

/// Full ranking of drug ids for one patient, best first.
using RankingFn = std::function<std::vector<std::string>(const PatientEHR&)>;

/// Means are accumulated in patient order.
EvalResult evaluate(std::span<const PatientEHR> patients, const RankingFn& rank, const KGStore& store,
                    std::size_t k = 5);

MetricMeans mean_of(std::span<const PatientMetrics> rows);

nlohmann::json to_json(const EvalResult& r);
/// Plain-text table of the means.
std::string format_table(const EvalResult& r, const std::string& title = "");
/// patient_id,jaccard,precision,recall,f1,ddi,hit1,prauc with %.17g values.
void write_per_patient_csv(const EvalResult& r, const std::filesystem::path& path);
std::vector<PatientMetrics> read_per_patient_csv(const std::filesystem::path& path);

}  // namespace tracedr
