#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracedr/encoders.hpp"
#include "tracedr/gnn.hpp"
#include "tracedr/metrics.hpp"
#include "tracedr/pipeline.hpp"

namespace tracedr {

struct TrainConfig {
    std::string preset = "desk";
    int epochs = 5;
    int batch_size = 1;
    double lr = 1e-3;
    int warmup_steps = 500;
    double weight_decay = 0.01;
    TaskWeights task_weights;
    AttentionMode attention_mode = AttentionMode::patient;
    Activation activation = Activation::none;
    int layers = 3;
    int dim = 128;
    int hash_probes = 2;
    std::uint64_t seed = 0;
    std::size_t candidates_k = 50;
    std::size_t eval_k = 5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    /// The reference schedule with a rate (1e-3) and width (128-d hash
    /// encodings, two probes per token) that train on a few thousand records.
    static TrainConfig desk();
    /// The reference configuration: lr 1e-5, 500 warm-up steps, 768-d encodings.
    static TrainConfig paper();
    static TrainConfig preset_named(const std::string& name);

    /// Throws InvalidArgument when task weights do not sum to 1 or a value is out of range.
    void validate() const;
    ModelOptions model_options() const;
    HashEncoderConfig encoder_config() const;

    nlohmann::json to_json() const;
    /// Applies the keys present in `j` on top of `base`.
    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

/// Adam with decoupled weight decay and linear warm-up to a constant rate.
/// Biases are not decayed.
class AdamW {
public:
    AdamW(const ModelParams& shape, const TrainConfig& cfg);
    void step(ModelParams& params, ModelParams& grad);
    double learning_rate_at(long step) const;
    long steps() const { return step_; }

private:
    double lr_, beta1_, beta2_, eps_, decay_;
    int warmup_;
    long step_ = 0;
    ModelParams m_, v_;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    std::size_t steps = 0;
    double lr = 0.0;
    MetricMeans dev;
};

struct TrainResult {
    ModelParams params;  // best epoch by dev F1
    int best_epoch = 0;
    double best_dev_f1 = -1.0;
    std::vector<EpochLog> log;
    std::size_t skipped = 0;  // training instances without a retrievable positive
};

/// Top-k metrics of the model over prepared instances (DDI left at zero
/// when `store` is null).
EvalResult evaluate_prepared(std::span<const PreparedInstance> instances, const ModelParams& params,
                             const ModelOptions& options, std::size_t k, const KGStore* store = nullptr);

TrainResult train(std::span<const PreparedInstance> train_set, std::span<const PreparedInstance> dev_set,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

std::vector<PreparedInstance> prepare_all(std::span<const PatientEHR> patients, const KGStore& store,
                                          const Bm25Index& index, const TextEncoder& encoder,
                                          std::size_t candidates_k);

/// Retrieval, graph construction and encoding per patient, then training.
TrainResult train(std::span<const PatientEHR> train_set, std::span<const PatientEHR> dev_set, const KGStore& store,
                  const Bm25Index& index, const TextEncoder& encoder, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

nlohmann::json to_json(const EpochLog& e);

}  // namespace tracedr
