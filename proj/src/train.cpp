#include "tracedr/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.preset = "paper";
    c.lr = 1e-5;
    c.warmup_steps = 500;
    c.dim = 768;
    return c;
}

TrainConfig TrainConfig::preset_named(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw InvalidArgument("unknown preset \"" + name + "\" (expected desk or paper)");
}

void TrainConfig::validate() const {
    if (std::abs(task_weights.entity + task_weights.evidence - 1.0) > 1e-12)
        throw InvalidArgument("task weights must sum to 1");
    if (task_weights.entity < 0 || task_weights.evidence < 0) throw InvalidArgument("task weights must be >= 0");
    if (warmup_steps < 0) throw InvalidArgument("warmup_steps must be >= 0");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (layers < 0) throw InvalidArgument("layers must be >= 0");
    if (dim < 8) throw InvalidArgument("dim must be >= 8");
    if (!(lr > 0)) throw InvalidArgument("lr must be > 0");
    if (candidates_k < 1 || eval_k < 1) throw InvalidArgument("candidates_k and eval_k must be >= 1");
}

ModelOptions TrainConfig::model_options() const { return {attention_mode, activation, task_weights}; }

HashEncoderConfig TrainConfig::encoder_config() const { return {dim, seed, hash_probes}; }

json TrainConfig::to_json() const {
    return {{"preset", preset},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"warmup_steps", warmup_steps},
            {"weight_decay", weight_decay},
            {"entity_weight", task_weights.entity},
            {"evidence_weight", task_weights.evidence},
            {"attention_mode", std::string(to_string(attention_mode))},
            {"activation", std::string(to_string(activation))},
            {"layers", layers},
            {"dim", dim},
            {"hash_probes", hash_probes},
            {"seed", seed},
            {"candidates_k", candidates_k},
            {"eval_k", eval_k},
            {"optimizer", "adamw"},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps}};
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw ParseError("training config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "preset") c.preset = v.get<std::string>();
            else if (key == "epochs") c.epochs = v.get<int>();
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "lr") c.lr = v.get<double>();
            else if (key == "warmup_steps") c.warmup_steps = v.get<int>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "entity_weight") c.task_weights.entity = v.get<double>();
            else if (key == "evidence_weight") c.task_weights.evidence = v.get<double>();
            else if (key == "attention_mode") c.attention_mode = parse_attention_mode(v.get<std::string>());
            else if (key == "activation") c.activation = parse_activation(v.get<std::string>());
            else if (key == "layers") c.layers = v.get<int>();
            else if (key == "dim") c.dim = v.get<int>();
            else if (key == "hash_probes") c.hash_probes = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "candidates_k") c.candidates_k = v.get<std::size_t>();
            else if (key == "eval_k") c.eval_k = v.get<std::size_t>();
            else if (key == "adam_beta1") c.adam_beta1 = v.get<double>();
            else if (key == "adam_beta2") c.adam_beta2 = v.get<double>();
            else if (key == "adam_eps") c.adam_eps = v.get<double>();
            else if (key == "optimizer") {
                if (v.get<std::string>() != "adamw") throw ParseError("only the adamw optimizer is supported");
            } else
                throw ParseError("unknown training config key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad training config: ") + e.what());
    }
    return c;
}

AdamW::AdamW(const ModelParams& shape, const TrainConfig& cfg)
    : lr_(cfg.lr), beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps), decay_(cfg.weight_decay),
      warmup_(cfg.warmup_steps), m_(ModelParams::zeros(shape.dim(), shape.num_layers())),
      v_(ModelParams::zeros(shape.dim(), shape.num_layers())) {}

double AdamW::learning_rate_at(long step) const {
    if (warmup_ <= 0 || step >= warmup_) return lr_;
    return lr_ * static_cast<double>(step) / static_cast<double>(warmup_);
}

void AdamW::step(ModelParams& params, ModelParams& grad) {
    ++step_;
    const double lr = learning_rate_at(step_);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    auto p = param_refs(params);
    auto g = param_refs(grad);
    auto m = param_refs(m_);
    auto v = param_refs(v_);
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t i = 0; i < p[t].size; ++i) {
            double gi = g[t].data[i];
            m[t].data[i] = beta1_ * m[t].data[i] + (1.0 - beta1_) * gi;
            v[t].data[i] = beta2_ * v[t].data[i] + (1.0 - beta2_) * gi * gi;
            double update = (m[t].data[i] / c1) / (std::sqrt(v[t].data[i] / c2) + eps_);
            if (p[t].decay) update += decay_ * p[t].data[i];
            p[t].data[i] -= lr * update;
        }
    }
}

EvalResult evaluate_prepared(std::span<const PreparedInstance> instances, const ModelParams& params,
                             const ModelOptions& options, std::size_t k, const KGStore* store) {
    EvalResult r;
    r.k = k;
    for (const auto& inst : instances) {
        if (inst.patient.ground_truth_drugs.empty()) continue;
        std::vector<std::string> ranking;
        if (!inst.graph.drug_nodes.empty())
            ranking = rank_drugs(inst, forward(inst.view, inst.encoding.nodes, inst.encoding.patient, params, options));
        std::vector<std::string> top(ranking.begin(),
                                     ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size())));
        auto sm = set_metrics(top, inst.patient.ground_truth_drugs);
        PatientMetrics pm;
        pm.patient_id = inst.patient.id;
        pm.jaccard = sm.jaccard;
        pm.precision = sm.precision;
        pm.recall = sm.recall;
        pm.f1 = sm.f1;
        pm.ddi = store ? ddi_rate(top, inst.patient.concomitant_drugs, *store) : 0.0;
        pm.hit1 = hit_at_1(ranking, inst.patient.ground_truth_drugs);
        pm.prauc = average_precision(ranking, inst.patient.ground_truth_drugs);
        pm.predicted = std::move(top);
        r.per_patient.push_back(std::move(pm));
    }
    r.means = mean_of(r.per_patient);
    return r;
}

namespace {

void add_scaled(ModelParams& acc, ModelParams& g, double scale) {
    auto a = param_refs(acc);
    auto b = param_refs(g);
    for (std::size_t t = 0; t < a.size(); ++t)
        for (std::size_t i = 0; i < a[t].size; ++i) a[t].data[i] += scale * b[t].data[i];
}

}  // namespace

TrainResult train(std::span<const PreparedInstance> train_set, std::span<const PreparedInstance> dev_set,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < train_set.size(); ++i)
        if (train_set[i].trainable()) usable.push_back(i);
    if (usable.empty()) throw InvalidArgument("training set has no usable instances");

    TrainResult result;
    result.skipped = train_set.size() - usable.size();
    const auto options = cfg.model_options();
    ModelParams params = ModelParams::init_uniform(cfg.dim, cfg.layers, cfg.seed);
    AdamW opt(params, cfg);
    std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
    result.params = params;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates with our own index draw keeps the order identical across standard libraries.
        for (std::size_t i = usable.size(); i > 1; --i) std::swap(usable[i - 1], usable[rng() % i]);

        EpochLog log;
        log.epoch = epoch;
        double loss_sum = 0.0;
        ModelParams batch = ModelParams::zeros(cfg.dim, cfg.layers);
        int in_batch = 0;
        for (std::size_t n = 0; n < usable.size(); ++n) {
            const auto& inst = train_set[usable[n]];
            auto lg = loss_and_gradient(inst.view, inst.encoding.nodes, inst.encoding.patient, inst.labels, params,
                                        options);
            loss_sum += lg.loss;
            add_scaled(batch, lg.gradient, 1.0);
            if (++in_batch == cfg.batch_size || n + 1 == usable.size()) {
                if (in_batch > 1) add_scaled(batch, batch, 1.0 / in_batch - 1.0);
                opt.step(params, batch);
                batch = ModelParams::zeros(cfg.dim, cfg.layers);
                in_batch = 0;
                ++log.steps;
            }
        }
        if (!params.all_finite()) throw Error("training diverged: non-finite parameters in epoch " + std::to_string(epoch));
        log.train_loss = loss_sum / static_cast<double>(usable.size());
        log.lr = opt.learning_rate_at(opt.steps());
        if (!dev_set.empty()) log.dev = evaluate_prepared(dev_set, params, options, cfg.eval_k).means;
        // Without a dev set the last epoch wins.
        double score = dev_set.empty() ? static_cast<double>(epoch) : log.dev.f1;
        if (score > result.best_dev_f1) {
            result.best_dev_f1 = score;
            result.best_epoch = epoch;
            result.params = params;
        }
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    if (dev_set.empty()) result.best_dev_f1 = 0.0;
    return result;
}

std::vector<PreparedInstance> prepare_all(std::span<const PatientEHR> patients, const KGStore& store,
                                          const Bm25Index& index, const TextEncoder& encoder,
                                          std::size_t candidates_k) {
    std::vector<PreparedInstance> out;
    out.reserve(patients.size());
    for (const auto& p : patients) out.push_back(prepare_instance(p, store, index, encoder, candidates_k));
    return out;
}

TrainResult train(std::span<const PatientEHR> train_set, std::span<const PatientEHR> dev_set, const KGStore& store,
                  const Bm25Index& index, const TextEncoder& encoder, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    if (train_set.empty()) throw InvalidArgument("empty training set");
    if (encoder.dimension() != cfg.dim)
        throw InvalidArgument("encoder dimension does not match the configured model dimension");
    auto tr = prepare_all(train_set, store, index, encoder, cfg.candidates_k);
    auto dv = prepare_all(dev_set, store, index, encoder, cfg.candidates_k);
    return train(tr, dv, cfg, on_epoch);
}

json to_json(const EpochLog& e) {
    return {{"epoch", e.epoch},
            {"train_loss", e.train_loss},
            {"steps", e.steps},
            {"lr", e.lr},
            {"dev",
             {{"jaccard", e.dev.jaccard},
              {"precision", e.dev.precision},
              {"recall", e.dev.recall},
              {"f1", e.dev.f1},
              {"hit1", e.dev.hit1},
              {"prauc", e.dev.prauc}}}};
}

}  // namespace tracedr
