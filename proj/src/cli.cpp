#include "tracedr/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "tracedr/benchgen.hpp"
#include "tracedr/errors.hpp"
#include "tracedr/llm_client.hpp"
#include "tracedr/metrics.hpp"
#include "tracedr/service.hpp"
#include "tracedr/synthetic_kg.hpp"
#include "tracedr/train.hpp"

namespace tracedr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Bm25Index index_for(const KGStore& store, const std::string& index_path) {
    return index_path.empty() ? Bm25Index::build(store) : Bm25Index::load(index_path);
}

std::unique_ptr<TextEncoder> encoder_for(TrainConfig& cfg, const std::string& encoder_url, std::ostream& err) {
    if (encoder_url.empty()) return std::make_unique<HashEncoder>(cfg.encoder_config());
    auto enc = std::make_unique<ExternalEncoder>(encoder_url);
    if (enc->dimension() != cfg.dim) {
        err << "note: using the encoder dimension " << enc->dimension() << " instead of " << cfg.dim << '\n';
        cfg.dim = enc->dimension();
    }
    return enc;
}

struct Options {
    std::string config, kg, out, data, index, model, split = "test", patient, llm_endpoint, llm_model = "default";
    std::string preset = "desk", encoder_url, log, report, csv, host = "127.0.0.1", attention;
    std::optional<std::uint64_t> seed;
    std::optional<int> n, epochs, max_per_disease, drugs, diseases, dim, layers;
    std::optional<double> lr;
    std::size_t k = 5, evidence = 3;
    int port = 8080;
    bool dry_run = false, as_json = false, baseline = false;
};

int cmd_synth_kg(const Options& o, std::ostream& out) {
    SyntheticKgConfig cfg = o.config.empty() ? SyntheticKgConfig{} : SyntheticKgConfig::from_json(read_json_file(o.config));
    if (o.seed) cfg.seed = *o.seed;
    if (o.drugs) cfg.n_drugs = *o.drugs;
    if (o.diseases) cfg.n_diseases = *o.diseases;
    auto store = synthesize_kg(cfg);
    save_kg(store, o.out);
    out << "wrote " << o.out << ": " << store.drugs().size() << " drugs, " << store.diseases().size()
        << " diseases, " << store.ingredients().size() << " ingredients\n";
    return 0;
}

int cmd_generate(const Options& o, std::ostream& out, std::ostream& err) {
    GenConfig cfg = o.config.empty() ? GenConfig{} : GenConfig::from_json(read_json_file(o.config));
    if (o.n) cfg.n_patients = *o.n;
    if (o.seed) cfg.seed = *o.seed;
    if (o.max_per_disease) cfg.max_patients_per_disease = *o.max_per_disease;
    cfg.validate();
    auto store = load_kg(o.kg);
    for (const auto& d : store.dangling())
        err << "warning: dropped dangling reference " << d.kind << ' ' << d.source << " -> " << d.id << '\n';
    RuleApplicabilityFilter rules;
    LexiconSymptomGenerator lexicon(cfg.seed);
    std::shared_ptr<const LlmClient> llm;
    std::unique_ptr<ApplicabilityFilter> llm_filter;
    std::unique_ptr<SymptomGenerator> llm_symptoms;
    if (!o.llm_endpoint.empty()) {
        llm = std::make_shared<LlmClient>(o.llm_endpoint, o.llm_model);
        llm_filter = std::make_unique<LlmApplicabilityFilter>(llm, rules);
        llm_symptoms = std::make_unique<LlmSymptomGenerator>(llm, lexicon);
    }
    const ApplicabilityFilter& filter = llm_filter ? *llm_filter : static_cast<const ApplicabilityFilter&>(rules);
    const SymptomGenerator& symptoms = llm_symptoms ? *llm_symptoms : static_cast<const SymptomGenerator&>(lexicon);
    auto bench = generate_benchmark(cfg, store, filter, symptoms);
    write_benchmark(bench, cfg, o.out);
    out << bench.report.summary();
    if (!bench.report.passed) {
        err << "audit failed; violating records are listed in " << (fs::path(o.out) / "audit.json").string() << '\n';
        return 1;
    }
    return 0;
}

int cmd_index(const Options& o, std::ostream& out) {
    auto store = load_kg(o.kg);
    auto index = Bm25Index::build(store);
    index.save(o.out);
    out << "indexed " << index.num_docs() << " drugs (avgdl " << index.avgdl() << ") into " << o.out << '\n';
    return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    TrainConfig cfg = TrainConfig::preset_named(o.preset);
    if (!o.config.empty()) cfg = TrainConfig::from_json(read_json_file(o.config), cfg);
    if (o.seed) cfg.seed = *o.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.lr) cfg.lr = *o.lr;
    if (o.dim) cfg.dim = *o.dim;
    if (o.layers) cfg.layers = *o.layers;
    if (!o.attention.empty()) cfg.attention_mode = parse_attention_mode(o.attention);
    cfg.validate();

    std::ofstream log;
    if (!o.log.empty()) {
        if (fs::path(o.log).has_parent_path()) fs::create_directories(fs::path(o.log).parent_path());
        log.open(o.log);
        if (!log) throw Error("cannot write " + o.log);
    }
    const json config_echo = cfg.to_json();
    out << "config " << config_echo.dump() << '\n';
    if (log) log << json{{"event", "config"}, {"config", config_echo}}.dump() << '\n' << std::flush;
    if (o.dry_run) return 0;
    if (o.kg.empty() || o.data.empty() || o.out.empty())
        throw InvalidArgument("train needs --kg, --data and --out (or --dry-run)");

    auto store = load_kg(o.kg);
    auto index = index_for(store, o.index);
    auto encoder = encoder_for(cfg, o.encoder_url, err);
    auto train_set = read_patients_jsonl((fs::path(o.data) / "train.jsonl").string());
    std::vector<PatientEHR> dev_set;
    if (fs::exists(fs::path(o.data) / "dev.jsonl")) dev_set = read_patients_jsonl((fs::path(o.data) / "dev.jsonl").string());

    const auto start = std::chrono::steady_clock::now();
    auto result = train(train_set, dev_set, store, index, *encoder, cfg, [&](const EpochLog& e) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %d  loss %.5f  steps %zu  lr %.3g  dev F1@%zu %.4f  Jaccard %.4f\n",
                      e.epoch, e.train_loss, e.steps, e.lr, cfg.eval_k, e.dev.f1, e.dev.jaccard);
        out << line << std::flush;
        if (log) {
            auto j = to_json(e);
            j["event"] = "epoch";
            log << j.dump() << '\n' << std::flush;
        }
    });
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (result.skipped) err << "note: " << result.skipped << " training records had no ground-truth drug among the candidates\n";

    Model model;
    model.params = std::move(result.params);
    model.options = cfg.model_options();
    model.encoder = encoder->describe();
    model.candidates_k = cfg.candidates_k;
    model.config = config_echo;
    model.save(o.out);
    out << "best epoch " << result.best_epoch << " (dev F1 " << result.best_dev_f1 << "), saved " << o.out << '\n';
    if (log)
        log << json{{"event", "done"}, {"best_epoch", result.best_epoch}, {"best_dev_f1", result.best_dev_f1},
                    {"skipped", result.skipped}, {"seconds", seconds}}
                   .dump()
            << '\n';
    return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
    if (o.split != "train" && o.split != "dev" && o.split != "test")
        throw InvalidArgument("--split must be train, dev or test");
    auto store = load_kg(o.kg);
    auto index = index_for(store, o.index);
    auto patients = read_patients_jsonl((fs::path(o.data) / (o.split + ".jsonl")).string());
    EvalResult result;
    std::string title;
    if (o.baseline) {
        title = "BM25 top-" + std::to_string(o.k) + " on " + o.split;
        result = evaluate(patients, [&](const PatientEHR& p) { return bm25_ranking(p, store, index); }, store, o.k);
    } else {
        if (o.model.empty()) throw InvalidArgument("evaluate needs --model (or --baseline bm25)");
        auto model = Model::load(o.model);
        auto encoder = make_encoder(model.encoder);
        Recommender rec(store, index, *encoder, model.params, model.options, model.candidates_k);
        title = "model " + o.model + " on " + o.split;
        result = evaluate(patients, [&](const PatientEHR& p) { return rec.rank(p); }, store, o.k);
    }
    out << format_table(result, title);
    if (!o.report.empty()) {
        auto j = to_json(result);
        j["split"] = o.split;
        j["system"] = o.baseline ? "bm25" : o.model;
        write_json_file(o.report, j);
        out << "report written to " << o.report << '\n';
    }
    if (!o.csv.empty()) write_per_patient_csv(result, o.csv);
    return 0;
}

int cmd_recommend(const Options& o, std::ostream& out) {
    auto a = Artifacts::load(o.kg, o.index, o.model);
    auto patient = patient_from_json(read_json_file(o.patient));
    validate_patient_ids(patient, a.store);
    Recommender rec(a.store, a.index, *a.encoder, a.model.params, a.model.options, a.model.candidates_k);
    auto result = rec.recommend(patient, o.k, o.evidence);
    if (o.as_json) {
        Service svc(a);
        json body = {{"patient", to_json(patient)}, {"top_k", o.k}, {"top_evidence", o.evidence}};
        out << svc.recommend(body.dump()).body.dump(2) << '\n';
        return 0;
    }
    int rank = 0;
    for (const auto& r : result.recommendations) {
        char line[64];
        std::snprintf(line, sizeof line, "%2d. %.4f  ", ++rank, r.score);
        out << line << r.label << " [" << r.drug_id << "]\n";
        for (const auto& e : r.supporting_evidence) {
            std::snprintf(line, sizeof line, "      evidence n%d (%.4f): ", e.node, e.score);
            out << line << e.text << '\n';
        }
    }
    return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
    auto a = Artifacts::load(o.kg, o.index, o.model);
    Service svc(a);
    out << "serving /v1 on http://" << o.host << ':' << o.port << '\n' << std::flush;
    serve(svc, o.host, o.port);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"TraceDR drug recommendation with traceable evidence", "tracedr"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth-kg", "Write a synthetic knowledge graph");
    synth->add_option("--out", o.out, "Output JSONL")->required();
    synth->add_option("--config", o.config, "Synthetic KG config (JSON)");
    synth->add_option("--seed", o.seed, "Random seed");
    synth->add_option("--drugs", o.drugs, "Number of drugs");
    synth->add_option("--diseases", o.diseases, "Number of diseases");

    auto* gen = app.add_subcommand("generate", "Generate a synthetic EHR benchmark");
    gen->add_option("--kg", o.kg, "Knowledge graph JSONL")->required();
    gen->add_option("--out", o.out, "Output directory")->required();
    gen->add_option("--n", o.n, "Number of patients");
    gen->add_option("--seed", o.seed, "Random seed");
    gen->add_option("--config", o.config, "Generation config (JSON)");
    gen->add_option("--max-per-disease", o.max_per_disease, "Patients per disease cap");
    gen->add_option("--llm-endpoint", o.llm_endpoint, "Chat-completions URL for filtering and symptoms");
    gen->add_option("--llm-model", o.llm_model, "Model name sent to the LLM endpoint");

    auto* idx = app.add_subcommand("index", "Build the BM25 index of drug documents");
    idx->add_option("--kg", o.kg, "Knowledge graph JSONL")->required();
    idx->add_option("--out", o.out, "Index JSON")->required();
    idx->add_option("--seed", o.seed, "Unused; accepted for uniformity");

    auto* tr = app.add_subcommand("train", "Train the evidence-graph model");
    tr->add_option("--kg", o.kg, "Knowledge graph JSONL");
    tr->add_option("--data", o.data, "Benchmark directory with train.jsonl and dev.jsonl");
    tr->add_option("--index", o.index, "BM25 index (rebuilt from the KG when omitted)");
    tr->add_option("--out", o.out, "Checkpoint path");
    tr->add_option("--preset", o.preset, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    tr->add_option("--config", o.config, "Training config (JSON), applied over the preset");
    tr->add_option("--seed", o.seed, "Random seed");
    tr->add_option("--epochs", o.epochs, "Epochs");
    tr->add_option("--lr", o.lr, "Peak learning rate");
    tr->add_option("--dim", o.dim, "Encoder and model dimension");
    tr->add_option("--layers", o.layers, "Message-passing layers");
    tr->add_option("--attention", o.attention, "patient or uniform")->check(CLI::IsMember({"patient", "uniform"}));
    tr->add_option("--encoder-url", o.encoder_url, "External encoder service instead of hashing");
    tr->add_option("--log", o.log, "Training log (JSONL)");
    tr->add_flag("--dry-run", o.dry_run, "Echo the configuration and exit");

    auto* ev = app.add_subcommand("evaluate", "Score a model (or the BM25 baseline) on a split");
    ev->add_option("--kg", o.kg, "Knowledge graph JSONL")->required();
    ev->add_option("--data", o.data, "Benchmark directory")->required();
    ev->add_option("--split", o.split, "train, dev or test");
    ev->add_option("--model", o.model, "Checkpoint");
    ev->add_option("--index", o.index, "BM25 index");
    ev->add_option("--k", o.k, "Recommendation list size");
    ev->add_option("--report", o.report, "JSON report path");
    ev->add_option("--csv", o.csv, "Per-patient CSV path");
    ev->add_option("--seed", o.seed, "Unused; accepted for uniformity");
    std::string baseline;
    ev->add_option("--baseline", baseline, "Evaluate a baseline instead of the model")->check(CLI::IsMember({"bm25"}));

    auto* rec = app.add_subcommand("recommend", "Recommend drugs with evidence for one patient");
    rec->add_option("--kg", o.kg, "Knowledge graph JSONL")->required();
    rec->add_option("--model", o.model, "Checkpoint")->required();
    rec->add_option("--patient", o.patient, "Patient JSON")->required();
    rec->add_option("--index", o.index, "BM25 index");
    rec->add_option("--k", o.k, "Number of drugs");
    rec->add_option("--evidence", o.evidence, "Evidence items per drug");
    rec->add_flag("--json", o.as_json, "Print the API response JSON");
    rec->add_option("--seed", o.seed, "Unused; accepted for uniformity");

    auto* srv = app.add_subcommand("serve", "Run the HTTP inference service");
    srv->add_option("--kg", o.kg, "Knowledge graph JSONL")->required();
    srv->add_option("--model", o.model, "Checkpoint")->required();
    srv->add_option("--index", o.index, "BM25 index");
    srv->add_option("--host", o.host, "Bind address");
    srv->add_option("--port", o.port, "Port");
    srv->add_option("--seed", o.seed, "Unused; accepted for uniformity");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        err << (sub ? sub->help() : app.help());
        return 2;
    }
    o.baseline = baseline == "bm25";

    try {
        if (synth->parsed()) return cmd_synth_kg(o, out);
        if (gen->parsed()) return cmd_generate(o, out, err);
        if (idx->parsed()) return cmd_index(o, out);
        if (tr->parsed()) return cmd_train(o, out, err);
        if (ev->parsed()) return cmd_evaluate(o, out);
        if (rec->parsed()) return cmd_recommend(o, out);
        if (srv->parsed()) return cmd_serve(o, out);
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace tracedr
