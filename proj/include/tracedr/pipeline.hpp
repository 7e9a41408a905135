#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracedr/encoders.hpp"
#include "tracedr/evidence_graph.hpp"
#include "tracedr/gnn.hpp"
#include "tracedr/kg_store.hpp"
#include "tracedr/retrieval.hpp"

namespace tracedr {

/// Everything the model needs for one patient: retrieval, graph, encodings
/// and (for benchmark records) labels.
struct PreparedInstance {
    PatientEHR patient;
    CandidateSet candidates;
    EvidenceGraph graph;
    GraphView view;
    GraphEncoding encoding;
    Labels labels;

    /// At least one ground-truth drug made it into the candidate set.
    bool trainable() const { return labels.entity.size() > 0 && labels.entity.maxCoeff() > 0.0; }
};

/// Drug nodes are positive iff in `truth`; an evidence node inherits the
/// label of its source drug.
Labels make_labels(const EvidenceGraph& graph, std::span<const std::string> truth);

PreparedInstance prepare_instance(const PatientEHR& patient, const KGStore& store, const Bm25Index& index,
                                  const TextEncoder& encoder, std::size_t candidates_k = 50);

struct SupportingEvidence {
    int node = 0;
    std::string drug_id;
    double score = 0.0;
    std::string text;
};

struct RankedRecommendation {
    std::string drug_id;
    std::string label;
    double score = 0.0;
    /// Evidence nodes adjacent to the drug node, highest score first.
    std::vector<SupportingEvidence> supporting_evidence;
};

/// All candidate drugs by entity probability, ties in candidate order.
std::vector<std::string> rank_drugs(const PreparedInstance& inst, const NodeScores& scores);

std::vector<RankedRecommendation> select_recommendations(const PreparedInstance& inst, const NodeScores& scores,
                                                         const KGStore& store, std::size_t top_k,
                                                         std::size_t top_evidence);

struct RecommendResult {
    PreparedInstance instance;
    NodeScores scores;
    std::vector<RankedRecommendation> recommendations;
};

/// Trained model plus what is needed to rebuild its inputs.
struct Model {
    static constexpr int kFormatVersion = 1;

    ModelParams params;
    ModelOptions options;
    nlohmann::json encoder;  // TextEncoder::describe()
    std::size_t candidates_k = 50;
    nlohmann::json config;  // training configuration echo

    nlohmann::json to_json() const;
    static Model from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);
};

/// Read-only inference over shared artifacts; safe to call concurrently.
class Recommender {
public:
    Recommender(const KGStore& store, const Bm25Index& index, const TextEncoder& encoder, const ModelParams& params,
                ModelOptions options, std::size_t candidates_k = 50);

    /// Throws Error when retrieval yields no candidates.
    RecommendResult recommend(const PatientEHR& patient, std::size_t top_k = 5, std::size_t top_evidence = 3) const;
    std::vector<std::string> rank(const PatientEHR& patient) const;

    const KGStore& store() const { return store_; }

private:
    const KGStore& store_;
    const Bm25Index& index_;
    const TextEncoder& encoder_;
    const ModelParams& params_;
    ModelOptions options_;
    std::size_t candidates_k_;
};

/// Every drug with a positive BM25 score for the patient's query, best first.
std::vector<std::string> bm25_ranking(const PatientEHR& patient, const KGStore& store, const Bm25Index& index);

std::vector<RankedRecommendation> recommend(const PatientEHR& patient, const KGStore& store, const Bm25Index& index,
                                            const TextEncoder& encoder, const ModelParams& params,
                                            const ModelOptions& options, std::size_t top_k = 5,
                                            std::size_t top_evidence = 3);

}  // namespace tracedr
