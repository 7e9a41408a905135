#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "tracedr/encoders.hpp"
#include "tracedr/kg_store.hpp"
#include "tracedr/pipeline.hpp"
#include "tracedr/retrieval.hpp"

namespace httplib {
class Server;
}

namespace tracedr {

/// Everything inference needs, loaded once and then read-only.
struct Artifacts {
    KGStore store;
    Bm25Index index;
    Model model;
    std::unique_ptr<TextEncoder> encoder;

    /// When `index_path` is empty the index is rebuilt from the KG.
    static Artifacts load(const std::filesystem::path& kg_path, const std::filesystem::path& index_path,
                          const std::filesystem::path& model_path);
};

struct HttpReply {
    int status = 200;
    nlohmann::json body;
};

/// The /v1 JSON API. Handlers only read the shared artifacts, so one
/// instance serves concurrent requests.
class Service {
public:
    static constexpr const char* kApiVersion = "v1";
    static constexpr std::size_t kMaxTopK = 100;
    static constexpr std::size_t kMaxTopEvidence = 20;

    Service(const KGStore& store, const Bm25Index& index, const TextEncoder& encoder, const Model& model);
    explicit Service(const Artifacts& a) : Service(a.store, a.index, *a.encoder, a.model) {}

    HttpReply health() const;
    HttpReply meta() const;
    HttpReply drug(const std::string& id) const;
    /// Body: {"patient": {...}, "top_k": 5, "top_evidence": 3}.
    HttpReply recommend(const std::string& body) const;

    /// Routes under /v1 (plus an unversioned /health).
    void mount(httplib::Server& server) const;

private:
    const KGStore& store_;
    const Bm25Index& index_;
    const TextEncoder& encoder_;
    const Model& model_;
};

/// Checks that every id in the patient resolves in the KG; throws
/// ParseError naming the field otherwise.
void validate_patient_ids(const PatientEHR& p, const KGStore& store);

/// Blocks until the server stops. Throws Error when binding fails.
void serve(const Service& service, const std::string& host, int port);

}  // namespace tracedr
