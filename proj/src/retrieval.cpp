#include "tracedr/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

DrugDocument make_document(const DrugRecord& drug, const KGStore& store, const Tokenizer& tokenizer) {
    DrugDocument doc{drug.id, {}};
    auto add = [&](const std::vector<std::string>& ids) {
        for (const auto& id : ids) {
            auto toks = tokenizer.tokenize(store.label_of(id));
            doc.tokens.insert(doc.tokens.end(), toks.begin(), toks.end());
        }
    };
    add(drug.treatments);
    add(drug.ingredients);
    add(drug.contraindications);
    return doc;
}

double bm25_idf(std::size_t num_docs, std::size_t doc_freq) {
    double n = static_cast<double>(num_docs);
    double df = static_cast<double>(doc_freq);
    return std::max(0.0, std::log((n - df + 0.5) / (df + 0.5)));
}

Bm25Index Bm25Index::build(const KGStore& store, std::shared_ptr<const Tokenizer> tokenizer, Bm25Params params) {
    std::vector<DrugDocument> docs;
    docs.reserve(store.drugs().size());
    for (const auto& d : store.drugs()) docs.push_back(make_document(d, store, *tokenizer));
    return build(std::move(docs), std::move(tokenizer), params);
}

Bm25Index Bm25Index::build(std::vector<DrugDocument> docs, std::shared_ptr<const Tokenizer> tokenizer,
                           Bm25Params params) {
    if (docs.empty()) throw InvalidArgument("cannot build a BM25 index over an empty corpus");
    Bm25Index idx;
    idx.params_ = params;
    idx.tokenizer_ = std::move(tokenizer);
    std::size_t total = 0;
    for (std::uint32_t i = 0; i < docs.size(); ++i) {
        idx.doc_ids_.push_back(docs[i].drug_id);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(docs[i].tokens.size()));
        total += docs[i].tokens.size();
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : docs[i].tokens) ++tf[t];
        for (const auto& [term, count] : tf) idx.postings_[term].push_back({i, count});
    }
    idx.avgdl_ = static_cast<double>(total) / static_cast<double>(docs.size());
    return idx;
}

std::size_t Bm25Index::doc_freq(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::vector<double> Bm25Index::score_all(std::span<const std::string> query) const {
    std::vector<double> scores(doc_ids_.size(), 0.0);
    for (const auto& term : query) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        double idf = bm25_idf(doc_ids_.size(), it->second.size());
        if (idf == 0.0) continue;
        for (const auto& p : it->second) {
            double tf = p.tf;
            double norm = params_.k1 * (1.0 - params_.b + params_.b * doc_lengths_[p.doc] / avgdl_);
            scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
        }
    }
    return scores;
}

std::vector<std::pair<std::string, double>> Bm25Index::search(std::span<const std::string> query,
                                                              std::size_t k) const {
    auto scores = score_all(query);
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) hits.push_back(i);
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return doc_ids_[a] < doc_ids_[b];
    };
    std::size_t keep = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
    std::vector<std::pair<std::string, double>> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.emplace_back(doc_ids_[hits[i]], scores[hits[i]]);
    return out;
}

json Bm25Index::to_json() const {
    json postings = json::object();
    std::map<std::string, const std::vector<Posting>*> ordered;
    for (const auto& [term, list] : postings_) ordered.emplace(term, &list);
    for (const auto& [term, list] : ordered) {
        json arr = json::array();
        for (const auto& p : *list) arr.push_back({p.doc, p.tf});
        postings[term] = std::move(arr);
    }
    return {
        {"format", "tracedr-bm25"},
        {"version", kFormatVersion},
        {"k1", params_.k1},
        {"b", params_.b},
        {"tokenizer", tokenizer_->name()},
        {"avgdl", avgdl_},
        {"doc_ids", doc_ids_},
        {"doc_lengths", doc_lengths_},
        {"postings", std::move(postings)},
    };
}

Bm25Index Bm25Index::from_json(const json& j) {
    try {
        if (j.at("format") != "tracedr-bm25") throw ParseError("not a BM25 index file");
        if (j.at("version").get<int>() != kFormatVersion)
            throw ParseError("unsupported BM25 index version " + j.at("version").dump());
        Bm25Index idx;
        idx.params_ = {j.at("k1").get<double>(), j.at("b").get<double>()};
        idx.tokenizer_ = tokenizer_by_name(j.at("tokenizer").get<std::string>());
        idx.avgdl_ = j.at("avgdl").get<double>();
        idx.doc_ids_ = j.at("doc_ids").get<std::vector<std::string>>();
        idx.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
        if (idx.doc_ids_.size() != idx.doc_lengths_.size() || idx.doc_ids_.empty())
            throw ParseError("inconsistent document tables in BM25 index");
        for (const auto& [term, arr] : j.at("postings").items()) {
            auto& list = idx.postings_[term];
            for (const auto& p : arr) {
                auto doc = p.at(0).get<std::uint32_t>();
                if (doc >= idx.doc_ids_.size()) throw ParseError("posting references unknown document");
                list.push_back({doc, p.at(1).get<std::uint32_t>()});
            }
        }
        return idx;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed BM25 index: ") + e.what());
    }
}

void Bm25Index::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write index " + path.string());
    out << to_json().dump() << '\n';
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open index " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed BM25 index: ") + e.what());
    }
    return from_json(j);
}

std::string patient_query_text(const KGStore& store, const PatientEHR& patient) {
    std::string text = store.label_of(patient.current_disease);
    for (const auto& s : patient.symptoms) text += " " + s;
    return text;
}

CandidateSet retrieve_candidates(const Bm25Index& index, const KGStore& store, const PatientEHR& patient,
                                 std::size_t k) {
    if (k == 0) throw InvalidArgument("k must be >= 1");
    auto query = index.tokenizer().tokenize(patient_query_text(store, patient));
    CandidateSet c;
    c.bm25_top = index.search(query, k);
    c.concomitant = patient.concomitant_drugs;
    std::unordered_set<std::string> seen;
    for (const auto& [id, score] : c.bm25_top)
        if (seen.insert(id).second) c.all.push_back(id);
    for (const auto& id : c.concomitant)
        if (seen.insert(id).second) c.all.push_back(id);
    return c;
}

std::vector<EvidenceText> gather_evidence(const KGStore& store, const CandidateSet& candidates) {
    std::vector<EvidenceText> out;
    out.reserve(candidates.all.size());
    for (const auto& id : candidates.all) out.push_back(store.verbalize(id));
    return out;
}

}  // namespace tracedr
