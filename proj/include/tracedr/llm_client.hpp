#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "tracedr/benchgen.hpp"

namespace httplib {
class Client;
}

namespace tracedr {

/// Minimal chat-completions client (POST {"model", "messages"} and read
/// choices[0].message.content). The URL may carry a path; it defaults to
/// /v1/chat/completions.
class LlmClient {
public:
    explicit LlmClient(const std::string& url, std::string model = "default", int timeout_seconds = 30);
    ~LlmClient();

    using Turn = std::pair<std::string, std::string>;  // user, assistant
    /// Throws Error on transport failure, non-200 status or a malformed body.
    std::string complete(const std::string& system, const std::vector<Turn>& demonstrations,
                         const std::string& user) const;
    const std::string& url() const { return url_; }

private:
    std::string url_, path_, model_;
    mutable std::mutex mu_;
    std::unique_ptr<httplib::Client> client_;
};

/// One-line description used in prompts, e.g. "35-year-old male".
std::string describe_patient(const PatientEHR& p);

/// Runs the rule filter first and asks the model only about diseases the
/// rules admit. Answers are cached per (demographics, disease). Transport
/// or parse failures fall back to the rule decision with a warning.
class LlmApplicabilityFilter final : public ApplicabilityFilter {
public:
    LlmApplicabilityFilter(std::shared_ptr<const LlmClient> client, const ApplicabilityFilter& rules);
    bool applicable(const PatientEHR& patient, const DiseaseRecord& disease) const override;
    std::string name() const override { return "llm+rules"; }
    std::size_t fallbacks() const { return fallbacks_; }

    static const std::vector<LlmClient::Turn>& demonstrations();

private:
    std::shared_ptr<const LlmClient> client_;
    const ApplicabilityFilter& rules_;
    mutable std::mutex mu_;
    mutable std::map<std::string, bool> cache_;
    mutable std::atomic<std::size_t> fallbacks_{0};
};

/// Asks the model for a comma-separated or JSON-array symptom list; falls
/// back to `fallback` with a warning when the call or parse fails.
class LlmSymptomGenerator final : public SymptomGenerator {
public:
    LlmSymptomGenerator(std::shared_ptr<const LlmClient> client, const SymptomGenerator& fallback);
    std::vector<std::string> generate(const PatientEHR& patient, const DiseaseRecord& disease) const override;
    std::string name() const override { return "llm"; }
    std::size_t fallbacks() const { return fallbacks_; }

    static const std::vector<LlmClient::Turn>& demonstrations();

private:
    std::shared_ptr<const LlmClient> client_;
    const SymptomGenerator& fallback_;
    mutable std::atomic<std::size_t> fallbacks_{0};
};

/// Parses a symptom answer: a JSON array of strings, or items separated by
/// commas, semicolons or newlines. Empty when nothing usable is found.
std::vector<std::string> parse_symptom_list(const std::string& content);

}  // namespace tracedr
