#include "tracedr/evidence_graph.hpp"

#include <algorithm>
#include <unordered_set>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

std::string_view to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::drug: return "drug";
        case NodeKind::disease: return "disease";
        case NodeKind::ingredient: return "ingredient";
        case NodeKind::contraindication: return "contraindication";
        case NodeKind::evidence: return "evidence";
    }
    return "unknown";
}

namespace {

NodeKind parse_node_kind(std::string_view s) {
    for (auto k : {NodeKind::drug, NodeKind::disease, NodeKind::ingredient, NodeKind::contraindication,
                   NodeKind::evidence})
        if (to_string(k) == s) return k;
    throw ParseError("unknown node kind \"" + std::string(s) + "\"");
}

NodeKind node_kind_for(EntityKind k) {
    switch (k) {
        case EntityKind::drug: return NodeKind::drug;
        case EntityKind::disease: return NodeKind::disease;
        case EntityKind::ingredient: return NodeKind::ingredient;
        case EntityKind::population: return NodeKind::contraindication;
    }
    return NodeKind::disease;
}

}  // namespace

std::vector<std::vector<int>> EvidenceGraph::neighbors() const {
    std::vector<std::vector<int>> adj(nodes.size());
    for (auto [ev, ent] : edges) {
        adj[ev].push_back(ent);
        adj[ent].push_back(ev);
    }
    return adj;
}

std::optional<int> EvidenceGraph::entity_node(std::string_view entity_id) const {
    for (const auto& n : nodes)
        if (n.kind != NodeKind::evidence && n.entity_id == entity_id) return n.index;
    return std::nullopt;
}

EvidenceGraph build_graph(const KGStore& store, const CandidateSet& candidates,
                          std::span<const EvidenceText> evidence) {
    if (evidence.size() != candidates.all.size())
        throw InvalidArgument("evidence list has " + std::to_string(evidence.size()) + " entries for " +
                              std::to_string(candidates.all.size()) + " candidates");
    for (std::size_t i = 0; i < evidence.size(); ++i)
        if (evidence[i].drug_id != candidates.all[i])
            throw InvalidArgument("evidence " + std::to_string(i) + " belongs to \"" + evidence[i].drug_id +
                                  "\", expected \"" + candidates.all[i] + "\"");

    EvidenceGraph g;
    std::unordered_map<std::string, int> entity_index;
    auto add_node = [&](NodeKind kind, const std::string& id, std::string text) {
        int idx = static_cast<int>(g.nodes.size());
        g.nodes.push_back({idx, kind, id, std::move(text)});
        return idx;
    };
    for (const auto& drug_id : candidates.all) {
        int idx = add_node(NodeKind::drug, drug_id, store.drug(drug_id).label);
        entity_index.emplace(drug_id, idx);
        g.drug_nodes.push_back(idx);
    }
    for (const auto& ev : evidence) g.evidence_nodes.push_back(add_node(NodeKind::evidence, ev.drug_id, ev.text));

    for (std::size_t i = 0; i < evidence.size(); ++i) {
        int ev_node = g.evidence_nodes[i];
        std::unordered_set<int> linked{g.drug_nodes[i]};
        g.edges.emplace_back(ev_node, g.drug_nodes[i]);
        for (const auto& id : evidence[i].mentioned_entities) {
            auto it = entity_index.find(id);
            int ent;
            if (it == entity_index.end()) {
                auto kind = store.kind_of(id);
                if (!kind) throw NotFoundError("evidence mentions unknown entity \"" + id + "\"");
                ent = add_node(node_kind_for(*kind), id, store.label_of(id));
                entity_index.emplace(id, ent);
            } else {
                ent = it->second;
            }
            if (linked.insert(ent).second) g.edges.emplace_back(ev_node, ent);
        }
    }
    return g;
}

GraphStats graph_stats(const EvidenceGraph& g) {
    GraphStats s;
    for (const auto& n : g.nodes) {
        switch (n.kind) {
            case NodeKind::drug: ++s.drug; break;
            case NodeKind::disease: ++s.disease; break;
            case NodeKind::ingredient: ++s.ingredient; break;
            case NodeKind::contraindication: ++s.contraindication; break;
            case NodeKind::evidence: ++s.evidence; break;
        }
    }
    s.edges = g.edges.size();
    std::vector<std::size_t> degree(g.nodes.size(), 0);
    for (auto [a, b] : g.edges) {
        ++degree[a];
        ++degree[b];
    }
    if (!degree.empty()) s.max_degree = *std::max_element(degree.begin(), degree.end());
    return s;
}

json to_json(const EvidenceGraph& g) {
    json nodes = json::array();
    for (const auto& n : g.nodes)
        nodes.push_back({{"index", n.index},
                         {"kind", std::string(to_string(n.kind))},
                         {"entity_id", n.entity_id},
                         {"text", n.surface_text}});
    json edges = json::array();
    for (auto [a, b] : g.edges) edges.push_back({a, b});
    return {{"nodes", nodes}, {"edges", edges}, {"drug_nodes", g.drug_nodes}, {"evidence_nodes", g.evidence_nodes}};
}

EvidenceGraph graph_from_json(const json& j) {
    try {
        EvidenceGraph g;
        for (const auto& n : j.at("nodes"))
            g.nodes.push_back({n.at("index").get<int>(), parse_node_kind(n.at("kind").get<std::string>()),
                               n.at("entity_id").get<std::string>(), n.at("text").get<std::string>()});
        for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        g.drug_nodes = j.at("drug_nodes").get<std::vector<int>>();
        g.evidence_nodes = j.at("evidence_nodes").get<std::vector<int>>();
        return g;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed evidence graph: ") + e.what());
    }
}

}  // namespace tracedr
