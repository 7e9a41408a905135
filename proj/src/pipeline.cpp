#include "tracedr/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

Labels make_labels(const EvidenceGraph& graph, std::span<const std::string> truth) {
    std::unordered_set<std::string> gold(truth.begin(), truth.end());
    Labels l;
    l.entity = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(graph.drug_nodes.size()));
    l.evidence = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(graph.evidence_nodes.size()));
    for (std::size_t i = 0; i < graph.drug_nodes.size(); ++i)
        if (gold.contains(graph.nodes[graph.drug_nodes[i]].entity_id)) l.entity[static_cast<Eigen::Index>(i)] = 1.0;
    for (std::size_t i = 0; i < graph.evidence_nodes.size(); ++i)
        if (gold.contains(graph.nodes[graph.evidence_nodes[i]].entity_id))
            l.evidence[static_cast<Eigen::Index>(i)] = 1.0;
    return l;
}

PreparedInstance prepare_instance(const PatientEHR& patient, const KGStore& store, const Bm25Index& index,
                                  const TextEncoder& encoder, std::size_t candidates_k) {
    PreparedInstance inst;
    inst.patient = patient;
    inst.candidates = retrieve_candidates(index, store, patient, candidates_k);
    auto evidence = gather_evidence(store, inst.candidates);
    inst.graph = build_graph(store, inst.candidates, evidence);
    inst.view = GraphView::from(inst.graph);
    inst.encoding = encode_graph(inst.graph, patient, store, encoder);
    inst.labels = make_labels(inst.graph, patient.ground_truth_drugs);
    return inst;
}

std::vector<std::string> rank_drugs(const PreparedInstance& inst, const NodeScores& scores) {
    const auto& drugs = inst.graph.drug_nodes;
    std::vector<std::size_t> order(drugs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.entity_probs[static_cast<Eigen::Index>(a)] > scores.entity_probs[static_cast<Eigen::Index>(b)];
    });
    std::vector<std::string> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(inst.graph.nodes[drugs[i]].entity_id);
    return out;
}

std::vector<RankedRecommendation> select_recommendations(const PreparedInstance& inst, const NodeScores& scores,
                                                         const KGStore& store, std::size_t top_k,
                                                         std::size_t top_evidence) {
    const auto& g = inst.graph;
    std::vector<double> evidence_score(g.nodes.size(), -1.0);
    for (std::size_t i = 0; i < g.evidence_nodes.size(); ++i)
        evidence_score[g.evidence_nodes[i]] = scores.evidence_probs[static_cast<Eigen::Index>(i)];
    auto adj = g.neighbors();

    std::vector<std::size_t> order(g.drug_nodes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.entity_probs[static_cast<Eigen::Index>(a)] > scores.entity_probs[static_cast<Eigen::Index>(b)];
    });
    order.resize(std::min(top_k, order.size()));

    std::vector<RankedRecommendation> out;
    for (auto i : order) {
        int node = g.drug_nodes[i];
        RankedRecommendation r;
        r.drug_id = g.nodes[node].entity_id;
        r.label = store.drug(r.drug_id).label;
        r.score = scores.entity_probs[static_cast<Eigen::Index>(i)];
        for (int n : adj[node])
            if (g.nodes[n].kind == NodeKind::evidence)
                r.supporting_evidence.push_back({n, g.nodes[n].entity_id, evidence_score[n], g.nodes[n].surface_text});
        std::stable_sort(r.supporting_evidence.begin(), r.supporting_evidence.end(),
                         [](const auto& a, const auto& b) { return a.score > b.score; });
        if (r.supporting_evidence.size() > top_evidence) r.supporting_evidence.resize(top_evidence);
        out.push_back(std::move(r));
    }
    return out;
}

json Model::to_json() const {
    return {{"format", "tracedr-checkpoint"},
            {"version", kFormatVersion},
            {"dim", params.dim()},
            {"num_layers", params.num_layers()},
            {"options",
             {{"attention", std::string(tracedr::to_string(options.attention))},
              {"activation", std::string(tracedr::to_string(options.activation))},
              {"entity_weight", options.weights.entity},
              {"evidence_weight", options.weights.evidence}}},
            {"encoder", encoder},
            {"candidates_k", candidates_k},
            {"config", config},
            {"params", params_to_json(params)}};
}

Model Model::from_json(const json& j) {
    try {
        if (j.at("format") != "tracedr-checkpoint") throw ParseError("not a checkpoint file");
        if (j.at("version").get<int>() != kFormatVersion)
            throw ParseError("unsupported checkpoint version " + j.at("version").dump());
        Model m;
        m.params = params_from_json(j.at("params"));
        if (m.params.dim() != j.at("dim").get<int>() || m.params.num_layers() != j.at("num_layers").get<int>())
            throw ParseError("checkpoint header does not match tensors");
        const auto& o = j.at("options");
        m.options.attention = parse_attention_mode(o.at("attention").get<std::string>());
        m.options.activation = parse_activation(o.at("activation").get<std::string>());
        m.options.weights = {o.at("entity_weight").get<double>(), o.at("evidence_weight").get<double>()};
        m.encoder = j.at("encoder");
        m.candidates_k = j.value("candidates_k", std::size_t{50});
        m.config = j.value("config", json::object());
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed checkpoint: ") + e.what());
    }
}

void Model::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write checkpoint " + path.string());
    out << to_json().dump() << '\n';
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed checkpoint: ") + e.what());
    }
    return from_json(j);
}

Recommender::Recommender(const KGStore& store, const Bm25Index& index, const TextEncoder& encoder,
                         const ModelParams& params, ModelOptions options, std::size_t candidates_k)
    : store_(store), index_(index), encoder_(encoder), params_(params), options_(options),
      candidates_k_(candidates_k) {
    if (encoder.dimension() != params.dim())
        throw InvalidArgument("encoder dimension " + std::to_string(encoder.dimension()) +
                              " does not match model dimension " + std::to_string(params.dim()));
}

RecommendResult Recommender::recommend(const PatientEHR& patient, std::size_t top_k, std::size_t top_evidence) const {
    RecommendResult r;
    r.instance = prepare_instance(patient, store_, index_, encoder_, candidates_k_);
    if (r.instance.graph.drug_nodes.empty())
        throw Error("retrieval returned no candidates for disease \"" + patient.current_disease +
                    "\" (query: \"" + patient_query_text(store_, patient) + "\")");
    r.scores = forward(r.instance.view, r.instance.encoding.nodes, r.instance.encoding.patient, params_, options_);
    r.recommendations = select_recommendations(r.instance, r.scores, store_, top_k, top_evidence);
    return r;
}

std::vector<std::string> Recommender::rank(const PatientEHR& patient) const {
    auto inst = prepare_instance(patient, store_, index_, encoder_, candidates_k_);
    if (inst.graph.drug_nodes.empty()) return {};
    auto scores = forward(inst.view, inst.encoding.nodes, inst.encoding.patient, params_, options_);
    return rank_drugs(inst, scores);
}

std::vector<RankedRecommendation> recommend(const PatientEHR& patient, const KGStore& store, const Bm25Index& index,
                                            const TextEncoder& encoder, const ModelParams& params,
                                            const ModelOptions& options, std::size_t top_k,
                                            std::size_t top_evidence) {
    return Recommender(store, index, encoder, params, options).recommend(patient, top_k, top_evidence).recommendations;
}

std::vector<std::string> bm25_ranking(const PatientEHR& patient, const KGStore& store, const Bm25Index& index) {
    std::vector<std::string> out;
    for (const auto& [id, score] : retrieve_candidates(index, store, patient, index.num_docs()).bm25_top)
        out.push_back(id);
    return out;
}

}  // namespace tracedr
