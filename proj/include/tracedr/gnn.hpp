#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "tracedr/evidence_graph.hpp"

namespace tracedr {

enum class AttentionMode { patient, uniform };
enum class Activation { none, tanh };

std::string_view to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view s);
std::string_view to_string(Activation act);
Activation parse_activation(std::string_view s);

struct TaskWeights {
    double entity = 0.7;
    double evidence = 0.3;
};

struct ModelOptions {
    AttentionMode attention = AttentionMode::patient;
    /// Applied after each residual update; none reproduces the plain update.
    Activation activation = Activation::none;
    TaskWeights weights;
};

/// Graph topology as consumed by the model.
struct GraphView {
    std::vector<std::vector<int>> neighbors;
    std::vector<int> drug_nodes;
    std::vector<int> evidence_nodes;

    static GraphView from(const EvidenceGraph& g);
    std::size_t size() const { return neighbors.size(); }
};

struct LayerParams {
    Eigen::MatrixXd attention;  // d x d
    Eigen::MatrixXd message;    // d x d
};

struct ModelParams {
    std::vector<LayerParams> layers;
    Eigen::MatrixXd entity_head;  // d x d bilinear form
    double entity_bias = 0.0;
    Eigen::MatrixXd evidence_head;
    double evidence_bias = 0.0;

    int dim() const { return static_cast<int>(entity_head.rows()); }
    int num_layers() const { return static_cast<int>(layers.size()); }

    static ModelParams zeros(int dim, int num_layers);
    /// Every projection uniform in (-1/sqrt(d), 1/sqrt(d)); biases zero.
    static ModelParams init_uniform(int dim, int num_layers, std::uint64_t seed);

    std::size_t parameter_count() const;
    bool all_finite() const;
};

/// Flat view of one parameter tensor, for optimizers and gradient checks.
struct ParamRef {
    std::string name;
    double* data;
    std::size_t size;
    bool decay;
};

std::vector<ParamRef> param_refs(ModelParams& params);

/// Softmax over the neighborhood of (W_a x_j) . p, or 1/|N| in uniform mode.
/// Throws InvalidArgument on an empty neighborhood.
std::vector<double> patient_attention(const Eigen::MatrixXd& nodes, const Eigen::VectorXd& patient,
                                      const Eigen::MatrixXd& attention, std::span<const int> neighborhood,
                                      AttentionMode mode = AttentionMode::patient);

/// One synchronous layer: x_n + W_m * sum_j alpha_nj x_j for nodes with
/// neighbors; isolated nodes pass through unchanged.
Eigen::MatrixXd message_pass(const GraphView& graph, const Eigen::MatrixXd& nodes, const Eigen::VectorXd& patient,
                             const LayerParams& layer, const ModelOptions& options = {});

struct NodeScores {
    Eigen::VectorXd entity_raw;  // aligned with GraphView::drug_nodes
    Eigen::VectorXd entity_probs;
    Eigen::VectorXd evidence_raw;  // aligned with GraphView::evidence_nodes
    Eigen::VectorXd evidence_probs;
};

/// Bilinear heads over final node encodings, softmax per node type.
NodeScores score_nodes(const GraphView& graph, const Eigen::MatrixXd& nodes, const Eigen::VectorXd& patient,
                       const ModelParams& params);

struct Labels {
    Eigen::VectorXd entity;    // aligned with drug_nodes
    Eigen::VectorXd evidence;  // aligned with evidence_nodes
};

inline constexpr double kProbEpsilon = 1e-7;

/// Weighted sum of per-type mean binary cross-entropy. Probabilities are
/// clamped to [eps, 1-eps]. Throws InvalidArgument without a positive entity.
double multitask_loss(const Eigen::VectorXd& entity_probs, const Eigen::VectorXd& evidence_probs,
                      const Labels& labels, const TaskWeights& weights);

/// All L layers followed by the scoring heads.
NodeScores forward(const GraphView& graph, const Eigen::MatrixXd& nodes, const Eigen::VectorXd& patient,
                   const ModelParams& params, const ModelOptions& options);

struct LossAndGradient {
    double loss = 0.0;
    ModelParams gradient;
    NodeScores scores;
};

/// Forward pass plus exact reverse-mode gradients for every parameter.
LossAndGradient loss_and_gradient(const GraphView& graph, const Eigen::MatrixXd& nodes,
                                  const Eigen::VectorXd& patient, const Labels& labels, const ModelParams& params,
                                  const ModelOptions& options);

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

}  // namespace tracedr
