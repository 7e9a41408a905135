#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tracedr/kg_store.hpp"
#include "tracedr/retrieval.hpp"

namespace tracedr {

enum class NodeKind { drug, disease, ingredient, contraindication, evidence };

std::string_view to_string(NodeKind kind);

struct GraphNode {
    int index = 0;
    NodeKind kind = NodeKind::drug;
    /// KG id for entity nodes; the source drug id for evidence nodes.
    std::string entity_id;
    /// Entity label, or the verbalized text for evidence nodes.
    std::string surface_text;

    bool operator==(const GraphNode&) const = default;
};

/// Bipartite graph between evidence nodes and entity nodes for one patient.
///
/// Node order: candidate drugs (in candidate order), their evidence nodes
/// (same order), then the remaining entities in order of first mention.
struct EvidenceGraph {
    std::vector<GraphNode> nodes;
    /// Undirected edges stored as (evidence node, entity node).
    std::vector<std::pair<int, int>> edges;
    std::vector<int> drug_nodes;
    /// evidence_nodes[i] is the evidence of drug_nodes[i].
    std::vector<int> evidence_nodes;

    std::size_t size() const { return nodes.size(); }
    /// Adjacency lists in edge insertion order.
    std::vector<std::vector<int>> neighbors() const;
    std::optional<int> entity_node(std::string_view entity_id) const;

    bool operator==(const EvidenceGraph&) const = default;
};

/// Throws InvalidArgument when `evidence` is not aligned with `candidates.all`.
EvidenceGraph build_graph(const KGStore& store, const CandidateSet& candidates, std::span<const EvidenceText> evidence);

struct GraphStats {
    std::size_t drug = 0;
    std::size_t disease = 0;
    std::size_t ingredient = 0;
    std::size_t contraindication = 0;
    std::size_t evidence = 0;
    std::size_t edges = 0;
    std::size_t max_degree = 0;

    bool operator==(const GraphStats&) const = default;
};

GraphStats graph_stats(const EvidenceGraph& g);

/// {"nodes":[{"index","kind","entity_id","text"}],"edges":[[ev,entity]],
///  "drug_nodes":[...],"evidence_nodes":[...]}
nlohmann::json to_json(const EvidenceGraph& g);
EvidenceGraph graph_from_json(const nlohmann::json& j);

}  // namespace tracedr
