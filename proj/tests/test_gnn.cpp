#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tracedr/errors.hpp"
#include "tracedr/gnn.hpp"

using namespace tracedr;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Labels random_labels(const GraphView& g, std::mt19937_64& rng) {
    Labels y;
    y.entity = VectorXd::Zero(static_cast<Eigen::Index>(g.drug_nodes.size()));
    y.evidence = VectorXd::Zero(static_cast<Eigen::Index>(g.evidence_nodes.size()));
    std::bernoulli_distribution coin(0.4);
    for (Eigen::Index i = 0; i < y.entity.size(); ++i) y.entity[i] = y.evidence[i] = coin(rng);
    y.entity[static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(y.entity.size()))] = 1.0;
    y.evidence = y.entity;
    return y;
}

GraphView single_edge() {
    GraphView g;
    g.neighbors = {{1}, {0}};
    g.drug_nodes = {0};
    g.evidence_nodes = {1};
    return g;
}

}  // namespace

TEST_CASE("attention over small neighborhoods") {
    MatrixXd x(3, 2);
    x << 1, 0, 0, 0, 0, 1;
    VectorXd p(2);
    p << 1, 0;
    MatrixXd wa = MatrixXd::Identity(2, 2);
    std::vector<int> one{0};
    CHECK(patient_attention(x, p, wa, one) == std::vector<double>{1.0});

    std::vector<int> equal{1, 2};  // both score 0
    auto a = patient_attention(x, p, wa, equal);
    CHECK(a[0] == doctest::Approx(0.5));
    CHECK(a[1] == doctest::Approx(0.5));

    std::vector<int> two{0, 1};  // raw scores 1 and 0
    auto b = patient_attention(x, p, wa, two);
    CHECK(b[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(b[0] == doctest::Approx(0.7311).epsilon(1e-4));
    CHECK(b[1] == doctest::Approx(0.2689).epsilon(1e-4));

    auto u = patient_attention(x, p, wa, two, AttentionMode::uniform);
    CHECK(u == std::vector<double>{0.5, 0.5});
    std::vector<int> none;
    CHECK_THROWS_AS(patient_attention(x, p, wa, none), InvalidArgument);
}

TEST_CASE("message passing special cases") {
    auto g = single_edge();
    MatrixXd x(2, 2);
    x << 1, 0, 0, 1;
    VectorXd p = VectorXd::Ones(2);
    LayerParams zero{MatrixXd::Random(2, 2), MatrixXd::Zero(2, 2)};
    CHECK(message_pass(g, x, p, zero) == x);

    LayerParams ident{MatrixXd::Random(2, 2), MatrixXd::Identity(2, 2)};
    MatrixXd out = message_pass(g, x, p, ident);
    MatrixXd expect(2, 2);
    expect << 1, 1, 1, 1;
    CHECK(out.isApprox(expect, 1e-15));

    // Isolated nodes pass through.
    GraphView iso = g;
    iso.neighbors.push_back({});
    MatrixXd x3(3, 2);
    x3 << 1, 0, 0, 1, 5, 7;
    CHECK(message_pass(iso, x3, p, ident).row(2) == x3.row(2));
    CHECK_THROWS_AS(message_pass(g, x3, p, ident), InvalidArgument);
}

TEST_CASE("uniform and patient attention agree on singleton neighborhoods") {
    auto g = single_edge();
    std::mt19937_64 rng(3);
    auto x = oracle::random_matrix(2, 6, 1.0, rng);
    auto p = oracle::random_vector(6, 1.0, rng);
    LayerParams l{oracle::random_matrix(6, 6, 1.0, rng), oracle::random_matrix(6, 6, 1.0, rng)};
    ModelOptions uni;
    uni.attention = AttentionMode::uniform;
    CHECK(message_pass(g, x, p, l).isApprox(message_pass(g, x, p, l, uni), 1e-15));
}

TEST_CASE("message passing and scoring match the straight-line oracle") {
    std::mt19937_64 rng(17);
    int cases = 0;
    for (int t = 0; t < 60; ++t, ++cases) {
        int n = 4 + static_cast<int>(rng() % 17);
        int d = t % 2 ? 8 : 5;
        auto g = oracle::random_graph(n, rng);
        auto x = oracle::random_matrix(n, d, 1.0, rng);
        auto p = oracle::random_vector(d, 1.0, rng);
        auto params = oracle::random_params(d, 1, 0.6, rng);
        bool uniform = t % 3 == 0;
        ModelOptions opt;
        opt.attention = uniform ? AttentionMode::uniform : AttentionMode::patient;

        MatrixXd got = message_pass(g, x, p, params.layers[0], opt);
        MatrixXd want = oracle::naive_message_pass(g, x, p, params.layers[0], uniform);
        CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-9);

        auto s = score_nodes(g, got, p, params);
        auto ent = oracle::naive_type_softmax(want, g.drug_nodes, p, params.entity_head, params.entity_bias);
        auto evi = oracle::naive_type_softmax(want, g.evidence_nodes, p, params.evidence_head, params.evidence_bias);
        for (std::size_t i = 0; i < ent.size(); ++i)
            CHECK(std::abs(s.entity_probs[static_cast<Eigen::Index>(i)] - ent[i]) <= 1e-9);
        for (std::size_t i = 0; i < evi.size(); ++i)
            CHECK(std::abs(s.evidence_probs[static_cast<Eigen::Index>(i)] - evi[i]) <= 1e-9);
    }
    CHECK(cases >= 50);
}

TEST_CASE("forward stacks layers") {
    std::mt19937_64 rng(5);
    auto g = oracle::random_graph(12, rng);
    auto x = oracle::random_matrix(12, 8, 1.0, rng);
    auto p = oracle::random_vector(8, 1.0, rng);
    auto params = oracle::random_params(8, 3, 0.3, rng);
    MatrixXd h = x;
    for (const auto& l : params.layers) h = oracle::naive_message_pass(g, h, p, l, false);
    auto want = oracle::naive_type_softmax(h, g.drug_nodes, p, params.entity_head, params.entity_bias);
    auto got = forward(g, x, p, params, {});
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got.entity_probs[static_cast<Eigen::Index>(i)] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("scoring probabilities per node type") {
    auto g = single_edge();
    MatrixXd x = MatrixXd::Ones(2, 3);
    VectorXd p = VectorXd::Ones(3);
    auto params = ModelParams::init_uniform(3, 0, 1);
    auto s = score_nodes(g, x, p, params);
    CHECK(s.entity_probs.size() == 1);
    CHECK(s.entity_probs[0] == 1.0);

    GraphView two = g;
    two.neighbors.push_back({});
    two.drug_nodes = {0, 2};
    MatrixXd x3 = MatrixXd::Ones(3, 3);
    auto s2 = score_nodes(two, x3, p, params);
    CHECK(s2.entity_probs[0] == doctest::Approx(0.5));
    CHECK(s2.entity_probs[1] == doctest::Approx(0.5));
}

TEST_CASE("multitask loss values") {
    const double q = 1.0 - kProbEpsilon;
    Labels y{VectorXd::Ones(1), VectorXd::Ones(1)};
    double perfect = multitask_loss(VectorXd::Constant(1, q), VectorXd::Constant(1, q), y, {});
    CHECK(perfect == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
    CHECK(perfect < 1e-6);

    Labels y2{VectorXd(2), VectorXd(2)};
    y2.entity << 1, 0;
    y2.evidence << 1, 0;
    VectorXd half = VectorXd::Constant(2, 0.5);
    CHECK(multitask_loss(half, half, y2, {}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(multitask_loss(half, half, y2, {}) == doctest::Approx(0.6931).epsilon(1e-4));

    TaskWeights w;
    CHECK(w.entity == 0.7);
    CHECK(w.evidence == 0.3);

    // Probabilities of exactly 0 or 1 are clamped.
    VectorXd hard(2);
    hard << 0.0, 1.0;
    CHECK(std::isfinite(multitask_loss(hard, hard, y2, {})));
    Labels none{VectorXd::Zero(2), VectorXd::Zero(2)};
    CHECK_THROWS_AS(multitask_loss(half, half, none, {}), InvalidArgument);
}

TEST_CASE("loss matches a hand-evaluated BCE oracle") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
        auto g = oracle::random_graph(10, rng);
        auto x = oracle::random_matrix(10, 6, 1.0, rng);
        auto p = oracle::random_vector(6, 1.0, rng);
        auto params = oracle::random_params(6, 2, 0.4, rng);
        auto y = random_labels(g, rng);
        auto res = loss_and_gradient(g, x, p, y, params, {});
        MatrixXd h = x;
        for (const auto& l : params.layers) h = oracle::naive_message_pass(g, h, p, l, false);
        double want = 0.7 * oracle::naive_bce(oracle::naive_type_softmax(h, g.drug_nodes, p, params.entity_head, 0), y.entity) +
                      0.3 * oracle::naive_bce(oracle::naive_type_softmax(h, g.evidence_nodes, p, params.evidence_head, 0), y.evidence);
        CHECK(res.loss == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("gradients match central finite differences") {
    std::mt19937_64 rng(99);
    for (int draw = 0; draw < 24; ++draw) {
        int n = 6 + static_cast<int>(rng() % 15);
        int d = draw % 2 ? 16 : 8;
        auto g = oracle::random_graph(n, rng);
        auto x = oracle::random_matrix(n, d, 1.0 / std::sqrt(d), rng);
        auto p = oracle::random_vector(d, 1.0 / std::sqrt(d), rng);
        auto params = oracle::random_params(d, 1 + draw % 3, 1.0 / std::sqrt(d), rng);
        ModelOptions opt;
        opt.attention = draw % 5 == 4 ? AttentionMode::uniform : AttentionMode::patient;
        opt.activation = draw % 4 == 3 ? Activation::tanh : Activation::none;
        auto check = oracle::finite_difference_check(g, x, p, random_labels(g, rng), params, opt);
        INFO("draw " << draw << " worst " << check.worst);
        CHECK(check.max_rel_error <= 1e-3);
        CHECK(check.checked == params.parameter_count());
    }
}

TEST_CASE("unused parameters get exactly zero gradient") {
    std::mt19937_64 rng(4);
    auto g = oracle::random_graph(10, rng);
    auto x = oracle::random_matrix(10, 8, 0.5, rng);
    auto p = oracle::random_vector(8, 0.5, rng);
    auto params = oracle::random_params(8, 2, 0.3, rng);
    auto y = random_labels(g, rng);

    ModelOptions no_evidence;
    no_evidence.weights = {1.0, 0.0};
    auto r = loss_and_gradient(g, x, p, y, params, no_evidence);
    CHECK(r.gradient.evidence_head.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.gradient.evidence_bias == 0.0);

    ModelOptions uniform;
    uniform.attention = AttentionMode::uniform;
    auto u = loss_and_gradient(g, x, p, y, params, uniform);
    for (const auto& l : u.gradient.layers) CHECK(l.attention.cwiseAbs().maxCoeff() == 0.0);

    // A shared bias shifts every logit of a type equally, so it has no effect.
    auto full = loss_and_gradient(g, x, p, y, params, {});
    CHECK(std::abs(full.gradient.entity_bias) < 1e-12);
}

TEST_CASE("plain gradient descent lowers the loss on a fixed instance") {
    std::mt19937_64 rng(2);
    auto g = oracle::random_graph(14, rng);
    REQUIRE(g.drug_nodes.size() >= 3);
    auto x = oracle::random_matrix(14, 8, 0.35, rng);
    auto p = oracle::random_vector(8, 0.35, rng);
    auto params = ModelParams::init_uniform(8, 2, 1);
    auto y = random_labels(g, rng);
    // All-positive labels would already sit at the softmax optimum.
    REQUIRE(y.entity.sum() < static_cast<double>(y.entity.size()));
    double first = loss_and_gradient(g, x, p, y, params, {}).loss;
    double last = first;
    for (int step = 0; step < 50; ++step) {
        auto r = loss_and_gradient(g, x, p, y, params, {});
        auto prefs = param_refs(params);
        auto grefs = param_refs(r.gradient);
        for (std::size_t k = 0; k < prefs.size(); ++k)
            for (std::size_t i = 0; i < prefs[k].size; ++i) prefs[k].data[i] -= 0.5 * grefs[k].data[i];
        last = r.loss;
    }
    CHECK(last < first * 0.8);
}

TEST_CASE("parameter json round trip and init") {
    auto params = ModelParams::init_uniform(8, 3, 42);
    CHECK(params.dim() == 8);
    CHECK(params.num_layers() == 3);
    CHECK(params.parameter_count() == 3 * 2 * 64 + 2 * 64 + 2);
    const double bound = 1.0 / std::sqrt(8.0);
    CHECK(params.layers[0].attention.cwiseAbs().maxCoeff() < bound);
    CHECK(params.entity_bias == 0.0);
    auto back = params_from_json(params_to_json(params));
    CHECK(back.layers[2].message == params.layers[2].message);
    CHECK(back.entity_head == params.entity_head);
    CHECK(ModelParams::init_uniform(8, 3, 42).entity_head == params.entity_head);
    CHECK(ModelParams::init_uniform(8, 3, 43).entity_head != params.entity_head);

    auto j = params_to_json(params);
    j["layers"].erase(0);
    CHECK_THROWS_AS(params_from_json(j), ParseError);
}

TEST_CASE("mode names") {
    CHECK(parse_attention_mode("uniform") == AttentionMode::uniform);
    CHECK(to_string(AttentionMode::patient) == "patient");
    CHECK(parse_activation("tanh") == Activation::tanh);
    CHECK_THROWS_AS(parse_attention_mode("none"), InvalidArgument);
}
