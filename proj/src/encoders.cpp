#include "tracedr/encoders.hpp"

#include <cmath>

#include <httplib.h>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

namespace {

std::string join_labels(const std::vector<std::string>& ids, const KGStore& store) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ", ";
        out += store.label_of(id);
    }
    return out;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += ", ";
        out += s;
    }
    return out;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::string serialize_patient(const PatientEHR& p, const KGStore& store) {
    std::vector<std::string> populations;
    for (const auto& t : p.population_tags) populations.push_back(t.text());
    const std::string sep(kFieldSeparator);
    std::string out = std::to_string(p.age);
    out += sep + std::string(to_string(p.sex));
    out += sep + join(populations);
    out += sep + join_labels(p.allergies, store);
    out += sep + store.label_of(p.current_disease);
    out += sep + join(p.symptoms);
    out += sep + join_labels(p.past_diseases, store);
    out += sep + join_labels(p.concomitant_drugs, store);
    return out;
}

HashEncoder::HashEncoder(HashEncoderConfig cfg, std::shared_ptr<const Tokenizer> tokenizer)
    : cfg_(cfg), tokenizer_(std::move(tokenizer)) {
    if (cfg_.dim < 8) throw InvalidArgument("hash encoder dimension must be >= 8");
    if (cfg_.probes < 1) throw InvalidArgument("hash encoder needs at least one probe per token");
}

Eigen::VectorXd HashEncoder::encode_text(std::string_view text) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(cfg_.dim);
    const double weight = 1.0 / std::sqrt(static_cast<double>(cfg_.probes));
    for (const auto& tok : tokenizer_->tokenize(text)) {
        std::uint64_t base = fnv1a(tok);
        for (int k = 0; k < cfg_.probes; ++k) {
            std::uint64_t h = splitmix64(base ^ splitmix64(cfg_.seed + static_cast<std::uint64_t>(k)));
            auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(cfg_.dim));
            v[bucket] += (h >> 63) ? -weight : weight;
        }
    }
    double norm = v.norm();
    if (norm > 0.0) v /= norm;
    return v;
}

std::vector<Eigen::VectorXd> HashEncoder::encode(std::span<const std::string> texts) const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(encode_text(t));
    return out;
}

json HashEncoder::describe() const {
    return {{"type", "hash"},
            {"dim", cfg_.dim},
            {"seed", cfg_.seed},
            {"probes", cfg_.probes},
            {"tokenizer", tokenizer_->name()}};
}

Eigen::VectorXd encode_text(std::string_view text, int dim, std::uint64_t seed) {
    return HashEncoder({dim, seed, 1}).encode_text(text);
}

ExternalEncoder::ExternalEncoder(std::string base_url, std::size_t batch_size)
    : base_url_(std::move(base_url)), batch_size_(batch_size ? batch_size : 1) {
    client_ = std::make_unique<httplib::Client>(base_url_);
    client_->set_connection_timeout(5);
    client_->set_read_timeout(60);
    auto res = client_->Get("/info");
    if (!res) throw Error("encoder service " + base_url_ + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error("encoder /info returned HTTP " + std::to_string(res->status));
    try {
        dim_ = json::parse(res->body).at("dimension").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad /info response: ") + e.what());
    }
    if (dim_ <= 0) throw ParseError("encoder reported non-positive dimension");
}

ExternalEncoder::~ExternalEncoder() = default;

std::vector<Eigen::VectorXd> ExternalEncoder::encode(std::span<const std::string> texts) const {
    std::vector<Eigen::VectorXd> out;
    out.reserve(texts.size());
    std::lock_guard lock(mutex_);
    for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
        auto count = std::min(batch_size_, texts.size() - start);
        json body = {{"texts", json::array()}};
        for (std::size_t i = 0; i < count; ++i) body["texts"].push_back(texts[start + i]);
        auto res = client_->Post("/encode", body.dump(), "application/json");
        if (!res) throw Error("encoder /encode failed: " + httplib::to_string(res.error()));
        if (res->status != 200) throw Error("encoder /encode returned HTTP " + std::to_string(res->status));
        try {
            auto vectors = json::parse(res->body).at("vectors");
            if (vectors.size() != count) throw ParseError("encoder returned wrong number of vectors");
            for (const auto& row : vectors) {
                if (static_cast<int>(row.size()) != dim_) throw ParseError("encoder returned wrong dimension");
                Eigen::VectorXd v(dim_);
                for (int k = 0; k < dim_; ++k) v[k] = row[k].get<double>();
                if (!v.allFinite()) throw ParseError("encoder returned non-finite values");
                out.push_back(std::move(v));
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad /encode response: ") + e.what());
        }
    }
    return out;
}

json ExternalEncoder::describe() const {
    return {{"type", "external"}, {"url", base_url_}, {"dim", dim_}};
}

std::unique_ptr<TextEncoder> make_encoder(const json& d) {
    try {
        auto type = d.at("type").get<std::string>();
        if (type == "hash") {
            HashEncoderConfig cfg;
            cfg.dim = d.at("dim").get<int>();
            cfg.seed = d.at("seed").get<std::uint64_t>();
            cfg.probes = d.value("probes", 1);
            return std::make_unique<HashEncoder>(cfg, tokenizer_by_name(d.value("tokenizer", "default")));
        }
        if (type == "external") {
            auto enc = std::make_unique<ExternalEncoder>(d.at("url").get<std::string>());
            if (d.contains("dim") && enc->dimension() != d.at("dim").get<int>())
                throw InvalidArgument("external encoder dimension changed since training");
            return enc;
        }
        throw InvalidArgument("unknown encoder type \"" + type + "\"");
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad encoder description: ") + e.what());
    }
}

GraphEncoding encode_graph(const EvidenceGraph& graph, const PatientEHR& patient, const KGStore& store,
                           const TextEncoder& encoder) {
    std::vector<std::string> texts;
    texts.reserve(graph.nodes.size() + 1);
    texts.push_back(serialize_patient(patient, store));
    for (const auto& n : graph.nodes) texts.push_back(n.surface_text);
    auto vecs = encoder.encode(texts);
    GraphEncoding out;
    const int d = encoder.dimension();
    out.patient = vecs[0];
    out.nodes.resize(static_cast<Eigen::Index>(graph.nodes.size()), d);
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) out.nodes.row(static_cast<Eigen::Index>(i)) = vecs[i + 1];
    return out;
}

}  // namespace tracedr
