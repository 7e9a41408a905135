#include "tracedr/service.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <httplib.h>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

HttpReply error_reply(int status, const std::string& message, const std::string& field = "") {
    json e = {{"error", message}};
    if (!field.empty()) e["field"] = field;
    return {status, e};
}

std::string node_ref(int index) { return "n" + std::to_string(index); }

std::size_t bounded(const json& body, const char* key, std::size_t fallback, std::size_t lo, std::size_t hi) {
    if (!body.contains(key)) return fallback;
    const auto& v = body.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(lo) ||
        v.get<long long>() > static_cast<long long>(hi))
        throw ParseError(std::string("field '") + key + "' must be an integer in [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
    return v.get<std::size_t>();
}

/// Field name quoted in a ParseError message, if any.
std::string field_of(const std::string& message) {
    auto a = message.find("field '");
    if (a == std::string::npos) return {};
    a += 7;
    auto b = message.find('\'', a);
    return b == std::string::npos ? std::string{} : message.substr(a, b - a);
}

}  // namespace

Artifacts Artifacts::load(const std::filesystem::path& kg_path, const std::filesystem::path& index_path,
                          const std::filesystem::path& model_path) {
    Artifacts a;
    a.store = load_kg(kg_path);
    a.index = index_path.empty() ? Bm25Index::build(a.store) : Bm25Index::load(index_path);
    a.model = Model::load(model_path);
    a.encoder = make_encoder(a.model.encoder);
    if (a.encoder->dimension() != a.model.params.dim())
        throw LoadError("encoder dimension " + std::to_string(a.encoder->dimension()) +
                        " does not match the model dimension " + std::to_string(a.model.params.dim()));
    return a;
}

void validate_patient_ids(const PatientEHR& p, const KGStore& store) {
    if (!store.find_disease(p.current_disease))
        throw ParseError("field 'current_disease': unknown disease id \"" + p.current_disease + "\"");
    for (const auto& d : p.past_diseases)
        if (!store.find_disease(d)) throw ParseError("field 'past_diseases': unknown disease id \"" + d + "\"");
    for (const auto& d : p.concomitant_drugs)
        if (!store.find_drug(d)) throw ParseError("field 'concomitant_drugs': unknown drug id \"" + d + "\"");
    for (const auto& i : p.allergies)
        if (!store.find_ingredient(i) && !store.find_drug(i))
            throw ParseError("field 'allergies': unknown ingredient id \"" + i + "\"");
}

Service::Service(const KGStore& store, const Bm25Index& index, const TextEncoder& encoder, const Model& model)
    : store_(store), index_(index), encoder_(encoder), model_(model) {}

HttpReply Service::health() const { return {200, {{"status", "ok"}}}; }

HttpReply Service::meta() const {
    return {200,
            {{"api_version", kApiVersion},
             {"model",
              {{"dim", model_.params.dim()},
               {"layers", model_.params.num_layers()},
               {"attention_mode", std::string(to_string(model_.options.attention))},
               {"activation", std::string(to_string(model_.options.activation))},
               {"entity_weight", model_.options.weights.entity},
               {"evidence_weight", model_.options.weights.evidence},
               {"candidates_k", model_.candidates_k},
               {"parameters", model_.params.parameter_count()}}},
             {"encoder", model_.encoder},
             {"config", model_.config},
             {"kg",
              {{"drugs", store_.drugs().size()},
               {"diseases", store_.diseases().size()},
               {"ingredients", store_.ingredients().size()}}},
             {"index", {{"documents", index_.num_docs()}, {"k1", index_.k1()}, {"b", index_.b()}}}}};
}

HttpReply Service::drug(const std::string& id) const {
    const auto* d = store_.find_drug(id);
    if (!d) return error_reply(404, "unknown drug id \"" + id + "\"");
    auto ev = store_.verbalize(id);
    json mentioned = json::array();
    for (const auto& e : ev.mentioned_entities) {
        auto kind = store_.kind_of(e);
        const char* k = "disease";
        if (kind == EntityKind::ingredient) k = "ingredient";
        if (kind == EntityKind::population) k = "population";
        if (kind == EntityKind::drug) k = "drug";
        mentioned.push_back({{"id", e}, {"label", store_.label_of(e)}, {"kind", k}});
    }
    return {200, {{"drug", to_json(*d)}, {"evidence", {{"text", ev.text}, {"mentioned_entities", mentioned}}}}};
}

HttpReply Service::recommend(const std::string& body_text) const {
    const auto start = Clock::now();
    json body = json::parse(body_text, nullptr, false);
    if (body.is_discarded()) return error_reply(400, "request body is not valid JSON");
    if (!body.is_object()) return error_reply(400, "request body must be a JSON object");
    PatientEHR patient;
    std::size_t top_k = 5, top_evidence = 3;
    try {
        if (!body.contains("patient")) throw ParseError("field 'patient' is required");
        patient = patient_from_json(body.at("patient"));
        patient.ground_truth_drugs.clear();
        validate_patient_ids(patient, store_);
        top_k = bounded(body, "top_k", top_k, 1, kMaxTopK);
        top_evidence = bounded(body, "top_evidence", top_evidence, 0, kMaxTopEvidence);
    } catch (const ParseError& e) {
        std::string field = field_of(e.what());
        bool top_level = field == "patient" || field == "top_k" || field == "top_evidence";
        return error_reply(400, e.what(), field.empty() || top_level ? field : "patient." + field);
    }

    auto t0 = Clock::now();
    PreparedInstance inst = prepare_instance(patient, store_, index_, encoder_, model_.candidates_k);
    const double prepare_ms = ms_since(t0);
    if (inst.graph.drug_nodes.empty())
        return error_reply(422, "no candidate drugs were retrieved for this patient", "patient.current_disease");
    t0 = Clock::now();
    auto scores = forward(inst.view, inst.encoding.nodes, inst.encoding.patient, model_.params, model_.options);
    auto recs = select_recommendations(inst, scores, store_, top_k, top_evidence);
    const double model_ms = ms_since(t0);

    json out_recs = json::array();
    std::set<int> keep;
    std::vector<std::pair<int, int>> edges;
    int rank = 0;
    for (const auto& r : recs) {
        json ev = json::array();
        for (const auto& s : r.supporting_evidence) {
            ev.push_back({{"evidence_id", node_ref(s.node)}, {"drug_id", s.drug_id}, {"score", s.score},
                          {"text", s.text}});
        }
        out_recs.push_back({{"rank", ++rank},
                            {"drug_id", r.drug_id},
                            {"label", r.label},
                            {"score", r.score},
                            {"supporting_evidence", ev}});
        // Excerpt: the drug node, its evidence node(s) and their entities.
        const int drug_node = *inst.graph.entity_node(r.drug_id);
        keep.insert(drug_node);
        for (int e : inst.view.neighbors[static_cast<std::size_t>(drug_node)]) {
            keep.insert(e);
            for (int x : inst.view.neighbors[static_cast<std::size_t>(e)]) {
                keep.insert(x);
                edges.emplace_back(e, x);
            }
        }
    }
    json nodes = json::array();
    for (int i : keep) {
        const auto& n = inst.graph.nodes[static_cast<std::size_t>(i)];
        nodes.push_back({{"id", node_ref(i)},
                         {"kind", std::string(to_string(n.kind))},
                         {"entity_id", n.entity_id},
                         {"text", n.surface_text}});
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    json jedges = json::array();
    for (auto [a, b] : edges) jedges.push_back({{"source", node_ref(a)}, {"target", node_ref(b)}});

    return {200,
            {{"patient_id", patient.id},
             {"recommendations", out_recs},
             {"graph", {{"nodes", nodes}, {"edges", jedges}}},
             {"candidates", inst.candidates.all.size()},
             {"timing_ms", {{"prepare", prepare_ms}, {"model", model_ms}, {"total", ms_since(start)}}}}};
}

void Service::mount(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const HttpReply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto health = [this, send](const httplib::Request&, httplib::Response& res) { send(res, this->health()); };
    server.Get("/v1/health", health);
    server.Get("/health", health);
    server.Get("/v1/meta", [this, send](const httplib::Request&, httplib::Response& res) { send(res, meta()); });
    server.Get(R"(/v1/drugs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, drug(req.matches[1]));
    });
    server.Post("/v1/recommend", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, recommend(req.body));
    });
    server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send(res, error_reply(500, what));
    });
}

void serve(const Service& service, const std::string& host, int port) {
    httplib::Server server;
    service.mount(server);
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace tracedr
