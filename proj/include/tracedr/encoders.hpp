#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tracedr/evidence_graph.hpp"
#include "tracedr/kg_store.hpp"
#include "tracedr/patient.hpp"
#include "tracedr/tokenizer.hpp"

namespace httplib {
class Client;
}

namespace tracedr {

/// U+2016 DOUBLE VERTICAL LINE.
inline constexpr std::string_view kFieldSeparator = "\xE2\x80\x96";

/// age‖sex‖populations‖allergies‖current disease‖symptoms‖past diseases‖concomitant drugs
/// List fields are joined with ", ", entity ids rendered by label.
std::string serialize_patient(const PatientEHR& patient, const KGStore& store);

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual int dimension() const = 0;
    virtual std::vector<Eigen::VectorXd> encode(std::span<const std::string> texts) const = 0;
    /// Persisted in checkpoints so inference can rebuild the same encoder.
    virtual nlohmann::json describe() const = 0;
};

struct HashEncoderConfig {
    int dim = 64;
    std::uint64_t seed = 0;
    /// Buckets touched per token.
    int probes = 1;
};

/// Signed feature hashing of tokens followed by L2 normalization. Empty text
/// (or text without tokens) maps to the zero vector.
class HashEncoder final : public TextEncoder {
public:
    explicit HashEncoder(HashEncoderConfig cfg = {}, std::shared_ptr<const Tokenizer> tokenizer = default_tokenizer());

    int dimension() const override { return cfg_.dim; }
    std::vector<Eigen::VectorXd> encode(std::span<const std::string> texts) const override;
    Eigen::VectorXd encode_text(std::string_view text) const;
    nlohmann::json describe() const override;
    const HashEncoderConfig& config() const { return cfg_; }

private:
    HashEncoderConfig cfg_;
    std::shared_ptr<const Tokenizer> tokenizer_;
};

Eigen::VectorXd encode_text(std::string_view text, int dim, std::uint64_t seed);

/// Client for an external text-encoder service:
///   GET  /info   -> {"dimension": d}
///   POST /encode {"texts": [...]} -> {"vectors": [[...], ...]}
/// Requests on one client are serialized.
class ExternalEncoder final : public TextEncoder {
public:
    /// `base_url` like "http://127.0.0.1:8080". Performs the /info handshake.
    explicit ExternalEncoder(std::string base_url, std::size_t batch_size = 64);
    ~ExternalEncoder() override;

    int dimension() const override { return dim_; }
    std::vector<Eigen::VectorXd> encode(std::span<const std::string> texts) const override;
    nlohmann::json describe() const override;

private:
    std::string base_url_;
    std::size_t batch_size_;
    int dim_ = 0;
    std::unique_ptr<httplib::Client> client_;
    mutable std::mutex mutex_;
};

/// Rebuilds an encoder from `TextEncoder::describe()` output.
std::unique_ptr<TextEncoder> make_encoder(const nlohmann::json& description);

struct GraphEncoding {
    Eigen::VectorXd patient;
    /// Row i encodes graph node i.
    Eigen::MatrixXd nodes;
};

GraphEncoding encode_graph(const EvidenceGraph& graph, const PatientEHR& patient, const KGStore& store,
                           const TextEncoder& encoder);

}  // namespace tracedr
