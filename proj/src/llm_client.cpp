#include "tracedr/llm_client.hpp"

#include <iostream>

#include <httplib.h>
#include <json.hpp>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
    const char* ws = " \t\r\n\"'.-*";
    auto a = s.find_first_not_of(ws);
    if (a == std::string::npos) return {};
    auto b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
}

constexpr const char* kFilterSystem =
    "You screen synthetic patient records. Given a patient and a disease, answer with exactly one word: "
    "\"applicable\" if the disease can plausibly occur in that patient, otherwise \"inapplicable\".";

constexpr const char* kSymptomSystem =
    "You write short symptom lists for synthetic patient records. Given a patient and a disease, answer with "
    "2 to 4 typical symptoms separated by commas and nothing else.";

}  // namespace

LlmClient::LlmClient(const std::string& url, std::string model, int timeout_seconds)
    : url_(url), path_("/v1/chat/completions"), model_(std::move(model)) {
    auto scheme = url.find("://");
    auto path_at = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string base = url;
    if (path_at != std::string::npos) {
        base = url.substr(0, path_at);
        if (path_at + 1 < url.size()) path_ = url.substr(path_at);
    }
    client_ = std::make_unique<httplib::Client>(base);
    if (!client_->is_valid()) throw InvalidArgument("bad LLM endpoint \"" + url + "\"");
    client_->set_connection_timeout(timeout_seconds, 0);
    client_->set_read_timeout(timeout_seconds, 0);
}

LlmClient::~LlmClient() = default;

std::string LlmClient::complete(const std::string& system, const std::vector<Turn>& demonstrations,
                                const std::string& user) const {
    json messages = json::array({{{"role", "system"}, {"content", system}}});
    for (const auto& [q, a] : demonstrations) {
        messages.push_back({{"role", "user"}, {"content", q}});
        messages.push_back({{"role", "assistant"}, {"content", a}});
    }
    messages.push_back({{"role", "user"}, {"content", user}});
    json body = {{"model", model_}, {"messages", messages}, {"temperature", 0}};

    std::lock_guard lock(mu_);
    auto res = client_->Post(path_, body.dump(), "application/json");
    if (!res) throw Error("LLM endpoint " + url_ + " unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error("LLM endpoint returned HTTP " + std::to_string(res->status));
    try {
        auto j = json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(std::string("malformed LLM response: ") + e.what());
    }
}

std::string describe_patient(const PatientEHR& p) {
    std::string s = std::to_string(p.age) + "-year-old " + std::string(to_string(p.sex));
    for (const auto& t : p.population_tags)
        if (t.kind != PopulationKind::child_below_age && t.kind != PopulationKind::elderly_above_age)
            s += ", " + t.text();
    return s;
}

// Prompt demonstrations are original; eight per task.
const std::vector<LlmClient::Turn>& LlmApplicabilityFilter::demonstrations() {
    static const std::vector<LlmClient::Turn> d = {
        {"Patient: 35-year-old male. Disease: prostatitis.", "applicable"},
        {"Patient: 28-year-old female. Disease: prostatitis.", "inapplicable"},
        {"Patient: 6-year-old male. Disease: senile cataract.", "inapplicable"},
        {"Patient: 72-year-old female. Disease: senile cataract.", "applicable"},
        {"Patient: 54-year-old male. Disease: ovarian cyst.", "inapplicable"},
        {"Patient: 31-year-old female, pregnant. Disease: gestational diabetes.", "applicable"},
        {"Patient: 67-year-old female. Disease: neonatal jaundice.", "inapplicable"},
        {"Patient: 45-year-old female. Disease: respiratory tract infection.", "applicable"},
    };
    return d;
}

LlmApplicabilityFilter::LlmApplicabilityFilter(std::shared_ptr<const LlmClient> client,
                                               const ApplicabilityFilter& rules)
    : client_(std::move(client)), rules_(rules) {}

bool LlmApplicabilityFilter::applicable(const PatientEHR& patient, const DiseaseRecord& disease) const {
    if (!rules_.applicable(patient, disease)) return false;
    const std::string who = describe_patient(patient);
    const std::string key = who + "\n" + disease.id;
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    bool verdict = true;
    try {
        auto answer = ascii_lower(trim(client_->complete(
            kFilterSystem, demonstrations(), "Patient: " + who + ". Disease: " + disease.label + ".")));
        if (answer.rfind("inapplicable", 0) == 0 || answer.rfind("not applicable", 0) == 0)
            verdict = false;
        else if (answer.rfind("applicable", 0) != 0)
            throw Error("unrecognized answer \"" + answer + "\"");
    } catch (const Error& e) {
        if (fallbacks_++ == 0) std::cerr << "warning: LLM filter failed, using rules only: " << e.what() << '\n';
        return true;
    }
    std::lock_guard lock(mu_);
    cache_[key] = verdict;
    return verdict;
}

const std::vector<LlmClient::Turn>& LlmSymptomGenerator::demonstrations() {
    static const std::vector<LlmClient::Turn> d = {
        {"Patient: 35-year-old male. Disease: respiratory tract infection.", "cough, phlegm, fever"},
        {"Patient: 8-year-old female. Disease: acute otitis media.", "ear pain, fever, irritability"},
        {"Patient: 62-year-old male. Disease: gout.", "joint swelling, redness, severe joint pain"},
        {"Patient: 29-year-old female, pregnant. Disease: urinary tract infection.",
         "frequent urination, burning urination, lower abdominal pain"},
        {"Patient: 47-year-old female. Disease: migraine.", "throbbing headache, nausea, light sensitivity"},
        {"Patient: 71-year-old female. Disease: heart failure.", "shortness of breath, ankle swelling, fatigue"},
        {"Patient: 23-year-old male. Disease: gastroenteritis.", "diarrhea, vomiting, abdominal cramps"},
        {"Patient: 55-year-old male. Disease: eczema.", "itching, dry skin, rash"},
    };
    return d;
}

LlmSymptomGenerator::LlmSymptomGenerator(std::shared_ptr<const LlmClient> client, const SymptomGenerator& fallback)
    : client_(std::move(client)), fallback_(fallback) {}

std::vector<std::string> LlmSymptomGenerator::generate(const PatientEHR& patient,
                                                       const DiseaseRecord& disease) const {
    try {
        auto out = parse_symptom_list(client_->complete(
            kSymptomSystem, demonstrations(), "Patient: " + describe_patient(patient) + ". Disease: " + disease.label + "."));
        if (out.empty()) throw Error("empty symptom list");
        return out;
    } catch (const Error& e) {
        if (fallbacks_++ == 0)
            std::cerr << "warning: LLM symptom generation failed, using the lexicon: " << e.what() << '\n';
        return fallback_.generate(patient, disease);
    }
}

std::vector<std::string> parse_symptom_list(const std::string& content) {
    std::vector<std::string> out;
    auto add = [&](std::string s) {
        s = trim(std::move(s));
        if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    };
    auto parsed = json::parse(content, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("symptoms")) parsed = parsed["symptoms"];
    if (!parsed.is_discarded() && parsed.is_array()) {
        for (const auto& x : parsed)
            if (x.is_string()) add(x.get<std::string>());
        return out;
    }
    std::string cur;
    for (char c : content) {
        if (c == ',' || c == ';' || c == '\n') {
            add(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    add(cur);
    return out;
}

}  // namespace tracedr
