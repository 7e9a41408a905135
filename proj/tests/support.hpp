// Shared fixtures for the test binaries.
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

// Eigen must precede httplib.h, whose <resolv.h> defines a `_res` macro.
#include <Eigen/Dense>
#include <httplib.h>
#include <json.hpp>

#include "tracedr/kg_store.hpp"

namespace testing {

using nlohmann::json;
using namespace tracedr;

inline std::filesystem::path source_dir() { return TRACEDR_SOURCE_DIR; }

/// Directory removed on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tracedr-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

/// Small hand-built KG.
///
///   DR1 treats DS1, DS2; active IN1 (allergen), forbidden in pregnancy
///   DR2 treats DS1; IN2 + IN5; interacts with DR3
///   DR3 treats DS2; IN3; caution for children under 12
///   DR4 treats DS3; IN1 (shares the allergen with DR1)
///   DR5 treats DS1; IN4; contraindicated in DS3, forbidden for reduced renal function
///   DS4 is male-only and untreated
inline KGStore toy_store() {
    std::vector<DiseaseRecord> diseases = {
        {"DS1", "respiratory tract infection", std::nullopt},
        {"DS2", "chronic cough", std::nullopt},
        {"DS3", "gastric ulcer", std::nullopt},
        {"DS4", "prostatitis", DemographicConstraints{Sex::male, std::nullopt, std::nullopt}},
    };
    std::vector<IngredientRecord> ingredients = {
        {"IN1", "amoxicillin", true}, {"IN2", "ambroxol", false}, {"IN3", "codeine", false},
        {"IN4", "omeprazole", false}, {"IN5", "menthol", false},
    };
    auto drug = [](std::string id, std::string label, std::vector<std::string> treats, std::vector<std::string> ings) {
        DrugRecord d;
        d.id = std::move(id);
        d.label = std::move(label);
        d.treatments = std::move(treats);
        d.ingredients = std::move(ings);
        return d;
    };
    std::vector<DrugRecord> drugs;
    drugs.push_back(drug("DR1", "Amoxil capsules", {"DS1", "DS2"}, {"IN1"}));
    drugs.back().contraindications = {"population:pregnant"};
    drugs.back().population_rules = {{PopulationTag::pregnant(), SafeUseAction::forbid}};
    drugs.push_back(drug("DR2", "Ambroxol syrup", {"DS1"}, {"IN2", "IN5"}));
    drugs.back().interactions = {"DR3"};
    drugs.push_back(drug("DR3", "Codeine linctus", {"DS2"}, {"IN3"}));
    drugs.back().population_rules = {{PopulationTag::child_below(12), SafeUseAction::caution}};
    drugs.push_back(drug("DR4", "Amoxicillin tablets", {"DS3"}, {"IN1"}));
    drugs.push_back(drug("DR5", "Omeprazole capsules", {"DS1"}, {"IN4"}));
    drugs.back().contraindications = {"DS3"};
    drugs.back().population_rules = {{PopulationTag::reduced_renal(), SafeUseAction::forbid}};
    return KGStore::from_records(std::move(drugs), std::move(diseases), std::move(ingredients));
}

inline PatientEHR toy_patient() {
    PatientEHR p;
    p.id = "p1";
    p.age = 35;
    p.sex = Sex::male;
    p.current_disease = "DS1";
    p.symptoms = {"cough", "phlegm", "fever"};
    return p;
}

/// httplib server on an ephemeral local port, stopped on scope exit.
class MockServer {
public:
    httplib::Server server;

    void start() {
        port_ = server.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server.listen_after_bind(); });
        for (int i = 0; i < 200 && !server.is_running(); ++i)
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ~MockServer() {
        server.stop();
        if (thread_.joinable()) thread_.join();
    }
    int port() const { return port_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    int port_ = 0;
    std::thread thread_;
};

/// Validator for the JSON-schema subset used in docs/api: type, required,
/// properties, additionalProperties (bool), items, enum, minimum, maximum,
/// minItems. Returns one message per violation.
inline void schema_check(const json& schema, const json& v, const std::string& where, std::vector<std::string>& errs) {
    if (schema.contains("type")) {
        const auto t = schema["type"].get<std::string>();
        bool ok = (t == "object" && v.is_object()) || (t == "array" && v.is_array()) ||
                  (t == "string" && v.is_string()) || (t == "integer" && v.is_number_integer()) ||
                  (t == "number" && v.is_number()) || (t == "boolean" && v.is_boolean()) || (t == "null" && v.is_null());
        if (!ok) {
            errs.push_back(where + ": expected " + t);
            return;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema["enum"]) found = found || e == v;
        if (!found) errs.push_back(where + ": value not in enum");
    }
    if (v.is_number()) {
        if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>())
            errs.push_back(where + ": below minimum");
        if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>())
            errs.push_back(where + ": above maximum");
    }
    if (v.is_object()) {
        for (const auto& r : schema.value("required", json::array()))
            if (!v.contains(r.get<std::string>())) errs.push_back(where + ": missing " + r.get<std::string>());
        const auto props = schema.value("properties", json::object());
        for (const auto& [k, sub] : v.items()) {
            if (props.contains(k))
                schema_check(props[k], sub, where + "." + k, errs);
            else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false)
                errs.push_back(where + ": unexpected property " + k);
        }
    }
    if (v.is_array()) {
        if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>())
            errs.push_back(where + ": too few items");
        if (schema.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i)
                schema_check(schema["items"], v[i], where + "[" + std::to_string(i) + "]", errs);
    }
}

inline std::vector<std::string> schema_errors(const json& schema, const json& v) {
    std::vector<std::string> errs;
    schema_check(schema, v, "$", errs);
    return errs;
}

inline json load_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

}  // namespace testing
