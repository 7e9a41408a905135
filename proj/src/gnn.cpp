#include "tracedr/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(AttentionMode mode) { return mode == AttentionMode::patient ? "patient" : "uniform"; }

AttentionMode parse_attention_mode(std::string_view s) {
    if (s == "patient") return AttentionMode::patient;
    if (s == "uniform") return AttentionMode::uniform;
    throw InvalidArgument("attention mode must be patient or uniform, got \"" + std::string(s) + "\"");
}

std::string_view to_string(Activation act) { return act == Activation::none ? "none" : "tanh"; }

Activation parse_activation(std::string_view s) {
    if (s == "none") return Activation::none;
    if (s == "tanh") return Activation::tanh;
    throw InvalidArgument("activation must be none or tanh, got \"" + std::string(s) + "\"");
}

GraphView GraphView::from(const EvidenceGraph& g) {
    return {g.neighbors(), g.drug_nodes, g.evidence_nodes};
}

ModelParams ModelParams::zeros(int dim, int num_layers) {
    ModelParams p;
    for (int l = 0; l < num_layers; ++l)
        p.layers.push_back({MatrixXd::Zero(dim, dim), MatrixXd::Zero(dim, dim)});
    p.entity_head = MatrixXd::Zero(dim, dim);
    p.evidence_head = MatrixXd::Zero(dim, dim);
    return p;
}

ModelParams ModelParams::init_uniform(int dim, int num_layers, std::uint64_t seed) {
    if (dim <= 0 || num_layers < 0) throw InvalidArgument("bad model shape");
    ModelParams p = zeros(dim, num_layers);
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& ref : param_refs(p)) {
        if (!ref.decay) continue;  // biases start at zero
        for (std::size_t i = 0; i < ref.size; ++i) {
            double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            ref.data[i] = (2.0 * u - 1.0) * bound;
        }
    }
    return p;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 2;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.attention.size() + l.message.size());
    return n + static_cast<std::size_t>(entity_head.size() + evidence_head.size());
}

bool ModelParams::all_finite() const {
    for (const auto& l : layers)
        if (!l.attention.allFinite() || !l.message.allFinite()) return false;
    return entity_head.allFinite() && evidence_head.allFinite() && std::isfinite(entity_bias) &&
           std::isfinite(evidence_bias);
}

std::vector<ParamRef> param_refs(ModelParams& p) {
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        refs.push_back({"layer" + std::to_string(l) + ".attention", layer.attention.data(),
                        static_cast<std::size_t>(layer.attention.size()), true});
        refs.push_back({"layer" + std::to_string(l) + ".message", layer.message.data(),
                        static_cast<std::size_t>(layer.message.size()), true});
    }
    refs.push_back({"entity_head", p.entity_head.data(), static_cast<std::size_t>(p.entity_head.size()), true});
    refs.push_back({"entity_bias", &p.entity_bias, 1, false});
    refs.push_back({"evidence_head", p.evidence_head.data(), static_cast<std::size_t>(p.evidence_head.size()), true});
    refs.push_back({"evidence_bias", &p.evidence_bias, 1, false});
    return refs;
}

namespace {

void softmax_in_place(std::span<double> v) {
    double m = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (auto& x : v) {
        x = std::exp(x - m);
        z += x;
    }
    for (auto& x : v) x /= z;
}

VectorXd softmax(const VectorXd& v) {
    VectorXd out = v;
    if (out.size() > 0) softmax_in_place({out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

void check_shapes(const GraphView& g, const MatrixXd& nodes, const VectorXd& patient, Eigen::Index d) {
    if (nodes.rows() != static_cast<Eigen::Index>(g.size()))
        throw InvalidArgument("node matrix has " + std::to_string(nodes.rows()) + " rows for " +
                              std::to_string(g.size()) + " graph nodes");
    if (nodes.cols() != d || patient.size() != d)
        throw InvalidArgument("encoding dimension does not match model dimension " + std::to_string(d));
}

struct LayerCache {
    MatrixXd input;
    std::vector<std::vector<double>> alpha;
    MatrixXd agg;
    MatrixXd output;
};

// Per-neighborhood weights given precomputed node scores s_j = x_j . (W_a^T p).
std::vector<double> neighborhood_weights(const VectorXd& scores, std::span<const int> nbrs, AttentionMode mode) {
    std::vector<double> a(nbrs.size());
    if (mode == AttentionMode::uniform) {
        std::fill(a.begin(), a.end(), 1.0 / static_cast<double>(nbrs.size()));
        return a;
    }
    for (std::size_t k = 0; k < nbrs.size(); ++k) a[k] = scores[nbrs[k]];
    softmax_in_place(a);
    return a;
}

LayerCache layer_forward(const GraphView& g, const MatrixXd& x, const VectorXd& p, const LayerParams& layer,
                         const ModelOptions& opt) {
    const auto n = static_cast<Eigen::Index>(g.size());
    LayerCache c;
    c.input = x;
    c.alpha.resize(g.size());
    c.agg = MatrixXd::Zero(n, x.cols());
    VectorXd scores;
    if (opt.attention == AttentionMode::patient) scores = x * (layer.attention.transpose() * p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& nbrs = g.neighbors[i];
        if (nbrs.empty()) continue;
        c.alpha[i] = neighborhood_weights(scores, nbrs, opt.attention);
        for (std::size_t k = 0; k < nbrs.size(); ++k) c.agg.row(i) += c.alpha[i][k] * x.row(nbrs[k]);
    }
    c.output = x + c.agg * layer.message.transpose();
    if (opt.activation == Activation::tanh)
        for (Eigen::Index i = 0; i < n; ++i)
            if (!g.neighbors[i].empty()) c.output.row(i) = c.output.row(i).array().tanh();
    return c;
}

// Returns d(loss)/d(input) and accumulates parameter gradients.
MatrixXd layer_backward(const GraphView& g, const LayerCache& c, const VectorXd& p, const LayerParams& layer,
                        const ModelOptions& opt, MatrixXd d_out, LayerParams& grad) {
    const auto n = static_cast<Eigen::Index>(g.size());
    if (opt.activation == Activation::tanh)
        for (Eigen::Index i = 0; i < n; ++i)
            if (!g.neighbors[i].empty())
                d_out.row(i) = d_out.row(i).array() * (1.0 - c.output.row(i).array().square());

    MatrixXd d_in = d_out;  // residual
    grad.message += d_out.transpose() * c.agg;
    MatrixXd d_agg = d_out * layer.message;

    VectorXd d_scores = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& nbrs = g.neighbors[i];
        if (nbrs.empty()) continue;
        const auto& a = c.alpha[i];
        std::vector<double> d_alpha(nbrs.size());
        double weighted = 0.0;
        for (std::size_t k = 0; k < nbrs.size(); ++k) {
            d_in.row(nbrs[k]) += a[k] * d_agg.row(i);
            d_alpha[k] = d_agg.row(i).dot(c.input.row(nbrs[k]));
            weighted += a[k] * d_alpha[k];
        }
        if (opt.attention == AttentionMode::patient)
            for (std::size_t k = 0; k < nbrs.size(); ++k) d_scores[nbrs[k]] += a[k] * (d_alpha[k] - weighted);
    }
    if (opt.attention == AttentionMode::patient) {
        VectorXd q = layer.attention.transpose() * p;
        d_in += d_scores * q.transpose();
        VectorXd d_q = c.input.transpose() * d_scores;
        grad.attention += p * d_q.transpose();
    }
    return d_in;
}

MatrixXd gather_rows(const MatrixXd& x, const std::vector<int>& rows) {
    MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

double mean_bce(const VectorXd& probs, const VectorXd& labels) {
    if (probs.size() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        double q = std::clamp(probs[i], kProbEpsilon, 1.0 - kProbEpsilon);
        sum += -(labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q));
    }
    return sum / static_cast<double>(probs.size());
}

// d(weight * mean BCE)/d(probs), zero where the clamp is active.
VectorXd mean_bce_grad(const VectorXd& probs, const VectorXd& labels, double weight) {
    VectorXd g = VectorXd::Zero(probs.size());
    if (probs.size() == 0 || weight == 0.0) return g;
    const double scale = weight / static_cast<double>(probs.size());
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        double q = probs[i];
        if (q < kProbEpsilon || q > 1.0 - kProbEpsilon) continue;
        g[i] = scale * (-labels[i] / q + (1.0 - labels[i]) / (1.0 - q));
    }
    return g;
}

VectorXd softmax_backward(const VectorXd& probs, const VectorXd& d_probs) {
    double dot = probs.dot(d_probs);
    return probs.array() * (d_probs.array() - dot);
}

void check_labels(const GraphView& g, const Labels& labels) {
    if (labels.entity.size() != static_cast<Eigen::Index>(g.drug_nodes.size()) ||
        labels.evidence.size() != static_cast<Eigen::Index>(g.evidence_nodes.size()))
        throw InvalidArgument("labels are not aligned with drug/evidence nodes");
}

}  // namespace

std::vector<double> patient_attention(const MatrixXd& nodes, const VectorXd& patient, const MatrixXd& attention,
                                      std::span<const int> neighborhood, AttentionMode mode) {
    if (neighborhood.empty()) throw InvalidArgument("patient attention needs a non-empty neighborhood");
    VectorXd scores = VectorXd::Zero(nodes.rows());
    if (mode == AttentionMode::patient) {
        VectorXd q = attention.transpose() * patient;
        for (int j : neighborhood) scores[j] = nodes.row(j).dot(q);
    }
    return neighborhood_weights(scores, neighborhood, mode);
}

MatrixXd message_pass(const GraphView& graph, const MatrixXd& nodes, const VectorXd& patient,
                      const LayerParams& layer, const ModelOptions& options) {
    check_shapes(graph, nodes, patient, layer.message.rows());
    return layer_forward(graph, nodes, patient, layer, options).output;
}

NodeScores score_nodes(const GraphView& graph, const MatrixXd& nodes, const VectorXd& patient,
                       const ModelParams& params) {
    if (graph.drug_nodes.empty()) throw InvalidArgument("cannot score a graph without drug nodes");
    check_shapes(graph, nodes, patient, params.dim());
    NodeScores s;
    s.entity_raw = gather_rows(nodes, graph.drug_nodes) * (params.entity_head * patient);
    s.entity_raw.array() += params.entity_bias;
    s.entity_probs = softmax(s.entity_raw);
    s.evidence_raw = gather_rows(nodes, graph.evidence_nodes) * (params.evidence_head * patient);
    s.evidence_raw.array() += params.evidence_bias;
    s.evidence_probs = softmax(s.evidence_raw);
    return s;
}

double multitask_loss(const VectorXd& entity_probs, const VectorXd& evidence_probs, const Labels& labels,
                      const TaskWeights& weights) {
    if (labels.entity.size() != entity_probs.size() || labels.evidence.size() != evidence_probs.size())
        throw InvalidArgument("labels are not aligned with predictions");
    if (labels.entity.size() == 0 || labels.entity.maxCoeff() <= 0.0)
        throw InvalidArgument("degenerate instance: no positive entity label");
    return weights.entity * mean_bce(entity_probs, labels.entity) +
           weights.evidence * mean_bce(evidence_probs, labels.evidence);
}

NodeScores forward(const GraphView& graph, const MatrixXd& nodes, const VectorXd& patient, const ModelParams& params,
                   const ModelOptions& options) {
    check_shapes(graph, nodes, patient, params.dim());
    MatrixXd x = nodes;
    for (const auto& layer : params.layers) x = layer_forward(graph, x, patient, layer, options).output;
    return score_nodes(graph, x, patient, params);
}

LossAndGradient loss_and_gradient(const GraphView& graph, const MatrixXd& nodes, const VectorXd& patient,
                                  const Labels& labels, const ModelParams& params, const ModelOptions& options) {
    check_shapes(graph, nodes, patient, params.dim());
    check_labels(graph, labels);
    std::vector<LayerCache> caches;
    caches.reserve(params.layers.size());
    MatrixXd x = nodes;
    for (const auto& layer : params.layers) {
        caches.push_back(layer_forward(graph, x, patient, layer, options));
        x = caches.back().output;
    }

    LossAndGradient out;
    out.scores = score_nodes(graph, x, patient, params);
    out.loss = multitask_loss(out.scores.entity_probs, out.scores.evidence_probs, labels, options.weights);
    out.gradient = ModelParams::zeros(params.dim(), params.num_layers());
    auto& grad = out.gradient;

    MatrixXd d_x = MatrixXd::Zero(x.rows(), x.cols());
    auto head_backward = [&](const std::vector<int>& rows, const VectorXd& probs, const VectorXd& y, double weight,
                             const MatrixXd& head, MatrixXd& d_head, double& d_bias) {
        VectorXd d_raw = softmax_backward(probs, mean_bce_grad(probs, y, weight));
        d_bias += d_raw.sum();
        VectorXd r = head * patient;
        VectorXd d_r = VectorXd::Zero(r.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double g = d_raw[static_cast<Eigen::Index>(i)];
            if (g == 0.0) continue;
            d_x.row(rows[i]) += g * r.transpose();
            d_r += g * x.row(rows[i]).transpose();
        }
        d_head += d_r * patient.transpose();
    };
    head_backward(graph.drug_nodes, out.scores.entity_probs, labels.entity, options.weights.entity,
                  params.entity_head, grad.entity_head, grad.entity_bias);
    head_backward(graph.evidence_nodes, out.scores.evidence_probs, labels.evidence, options.weights.evidence,
                  params.evidence_head, grad.evidence_head, grad.evidence_bias);

    for (std::size_t l = params.layers.size(); l-- > 0;)
        d_x = layer_backward(graph, caches[l], patient, params.layers[l], options, std::move(d_x), grad.layers[l]);
    return out;
}

namespace {

json matrix_json(const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd matrix_from_json(const json& j, int dim) {
    if (!j.is_array() || static_cast<int>(j.size()) != dim) throw ParseError("matrix has wrong number of rows");
    MatrixXd m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != dim)
            throw ParseError("matrix row has wrong length");
        for (int k = 0; k < dim; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

}  // namespace

json params_to_json(const ModelParams& p) {
    json layers = json::array();
    for (const auto& l : p.layers)
        layers.push_back({{"attention", matrix_json(l.attention)}, {"message", matrix_json(l.message)}});
    return {{"dim", p.dim()},
            {"num_layers", p.num_layers()},
            {"layers", layers},
            {"entity_head", matrix_json(p.entity_head)},
            {"entity_bias", p.entity_bias},
            {"evidence_head", matrix_json(p.evidence_head)},
            {"evidence_bias", p.evidence_bias}};
}

ModelParams params_from_json(const json& j) {
    try {
        int dim = j.at("dim").get<int>();
        int num_layers = j.at("num_layers").get<int>();
        if (dim <= 0 || num_layers < 0) throw ParseError("bad parameter shape");
        const auto& layers = j.at("layers");
        if (static_cast<int>(layers.size()) != num_layers) throw ParseError("layer count mismatch");
        ModelParams p;
        for (const auto& l : layers)
            p.layers.push_back({matrix_from_json(l.at("attention"), dim), matrix_from_json(l.at("message"), dim)});
        p.entity_head = matrix_from_json(j.at("entity_head"), dim);
        p.entity_bias = j.at("entity_bias").get<double>();
        p.evidence_head = matrix_from_json(j.at("evidence_head"), dim);
        p.evidence_bias = j.at("evidence_bias").get<double>();
        if (!p.all_finite()) throw ParseError("non-finite parameter");
        return p;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed parameters: ") + e.what());
    }
}

}  // namespace tracedr
