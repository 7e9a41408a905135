#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tracedr/kg_store.hpp"
#include "tracedr/tokenizer.hpp"

namespace tracedr {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/// Bag of tokens describing one drug: labels of its target diseases,
/// ingredients and contraindications.
struct DrugDocument {
    std::string drug_id;
    std::vector<std::string> tokens;
};

DrugDocument make_document(const DrugRecord& drug, const KGStore& store, const Tokenizer& tokenizer);

/// Robertson-Sparck-Jones idf with +0.5 smoothing, floored at zero.
double bm25_idf(std::size_t num_docs, std::size_t doc_freq);

struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
};

/// Okapi BM25 over drug documents. Immutable after build.
class Bm25Index {
public:
    static constexpr int kFormatVersion = 1;

    static Bm25Index build(const KGStore& store, std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer(),
                           Bm25Params params = {});
    static Bm25Index build(std::vector<DrugDocument> docs, std::shared_ptr<const Tokenizer> tokenizer,
                           Bm25Params params = {});

    double k1() const { return params_.k1; }
    double b() const { return params_.b; }
    double avgdl() const { return avgdl_; }
    std::size_t num_docs() const { return doc_ids_.size(); }
    const std::string& doc_id(std::size_t doc) const { return doc_ids_[doc]; }
    std::size_t doc_length(std::size_t doc) const { return doc_lengths_[doc]; }
    std::size_t doc_freq(const std::string& term) const;
    const Tokenizer& tokenizer() const { return *tokenizer_; }

    /// Scores of every document for the query, accumulated over postings.
    /// Query tokens are counted with multiplicity.
    std::vector<double> score_all(std::span<const std::string> query) const;

    /// Documents with positive score, best first, ties by drug id ascending.
    std::vector<std::pair<std::string, double>> search(std::span<const std::string> query, std::size_t k) const;

    nlohmann::json to_json() const;
    static Bm25Index from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

private:
    Bm25Params params_;
    std::shared_ptr<const Tokenizer> tokenizer_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

struct CandidateSet {
    std::vector<std::pair<std::string, double>> bm25_top;
    std::vector<std::string> concomitant;
    /// bm25 order then concomitant order, deduplicated.
    std::vector<std::string> all;
};

std::string patient_query_text(const KGStore& store, const PatientEHR& patient);

/// BM25 top-k for the patient's current disease and symptoms, plus the
/// patient's concomitant drugs.
CandidateSet retrieve_candidates(const Bm25Index& index, const KGStore& store, const PatientEHR& patient,
                                 std::size_t k = 50);

/// One verbalization per drug in `candidates.all`, index aligned.
std::vector<EvidenceText> gather_evidence(const KGStore& store, const CandidateSet& candidates);

}  // namespace tracedr
