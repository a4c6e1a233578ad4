#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <json.hpp>

#include "tablefuse/assembly.hpp"
#include "tablefuse/builtin_zoo.hpp"
#include "tablefuse/config.hpp"
#include "tablefuse/corruption.hpp"
#include "tablefuse/feature_engineering.hpp"
#include "tablefuse/gateway.hpp"
#include "tablefuse/hpo.hpp"
#include "tablefuse/model_zoo.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/runtime/trainer.hpp"
#include "tablefuse/synthetic.hpp"
#include "tablefuse/table.hpp"

namespace tablefuse {

// Runs the pipeline stage by stage, leaving one artifact file per stage in
// the run directory so users can inspect or edit between stages. Prerequisite
// artifacts are checked by name; logs carry the LLM reason fields.
class Orchestrator {
public:
    explicit Orchestrator(RunConfig config, std::shared_ptr<Transport> transport = nullptr)
        : config_(std::move(config)) {
        config_.validate();
        std::filesystem::create_directories(config_.out_dir);

        auto fixtures = std::make_shared<FixtureStore>();
        if (!config_.fixture_path.empty() && std::filesystem::exists(config_.fixture_path))
            fixtures->merge_file(config_.fixture_path);
        else if (config_.gateway.mode == GatewayMode::replay)
            throw std::runtime_error("replay mode needs an existing fixture file: " +
                                     config_.fixture_path.string());
        if (config_.gateway.mode == GatewayMode::record && !config_.fixture_path.empty())
            fixtures->set_write_through(config_.fixture_path);

        gateway_ = std::make_unique<LlmGateway>(config_.gateway, fixtures, std::move(transport));
    }

    LlmGateway& gateway() { return *gateway_; }
    const RunConfig& config() const { return config_; }

    void infer_modalities() {
        const StructuredTable table = load_input_table();
        auto schema = tablefuse::infer_modalities(*gateway_, table, Directive{config_.modality_directive},
                                                  config_.modality_overrides, config_.sample_rows,
                                                  config_.seed);
        enforce_label_modality(schema, table, config_.task);
        write_artifact("schema.json", schema.to_json());
        log("modality inference covered " + std::to_string(schema.by_column.size()) + " columns");
    }

    void engineer_features() {
        const StructuredTable table = load_input_table();
        const ModalitySchema schema = load_schema(table);

        const FilterResult filter =
            filter_features(*gateway_, table, schema, Directive{config_.filter_directive});
        log("feature filter kept " + std::to_string(filter.retained.size()) + ", dropped [" +
            detail::join(filter.dropped, ", ") + "], reinstated [" +
            detail::join(filter.reinstated, ", ") + "]");

        const FilteredTable filtered = apply_filter(table, schema, filter);
        ImputeOptions impute_options;
        impute_options.seed = config_.seed;
        const ImputeOutcome imputed =
            impute_table(*gateway_, filtered, Directive{config_.impute_directive}, impute_options);
        log("imputation filled " + std::to_string(imputed.report.filled.size()) +
            " cells, unresolved " + std::to_string(imputed.report.unresolved.size()));

        save_table(imputed.table, config_.out_dir / "engineered.csv");
        nlohmann::json report = filter.to_json();
        report.update(imputed.report.to_json());
        write_artifact("afe_report.json", report);
    }

    void select() {
        const StructuredTable engineered = load_engineered_table();
        const ModalitySchema schema = load_schema(engineered);

        ModelZoo zoo;
        load_zoo(zoo);
        const std::string description = build_data_description(schema, engineered, config_.task);
        const auto selections = select_per_modality(*gateway_, zoo, schema, engineered, description,
                                                    Directive{config_.select_directive});
        nlohmann::json doc = nlohmann::json::object();
        doc["data_description"] = description;
        nlohmann::json by_modality = nlohmann::json::object();
        for (const auto& [m, result] : selections) {
            by_modality[modality_tag(m)] = result.to_json();
            log(std::string("selected '") + result.name + "' for " + modality_tag(m) +
                " because: " + result.reason);
        }
        doc["selections"] = by_modality;
        write_artifact("selections.json", doc);
    }

    void assemble() {
        const StructuredTable engineered = load_engineered_table();
        const ModalitySchema schema = load_schema(engineered);
        const auto selections = load_selections();

        ModelZoo zoo;
        load_zoo(zoo);

        const SplitIndices split =
            make_split(engineered.row_count(), config_.train.val_fraction, config_.seed);
        const ProcessorPlan plan = build_processor_plan(schema, selections, engineered, config_.task);
        FittedProcessors fitted;
        fitted.fit(plan, engineered, split.train_rows, sidecar_base());

        const std::size_t output_dim =
            config_.task == TaskKind::regression ? 1 : fitted.class_count();
        const FusionSpec spec =
            build_fusion_spec(selections, zoo, output_dim, {}, fitted.encoded_dims());

        nlohmann::json doc = {{"version", 1},
                              {"task", task_tag(config_.task)},
                              {"fusion_spec", spec.to_json()},
                              {"processor_plan", fitted.to_json()},
                              {"split", {{"seed", config_.seed},
                                         {"val_fraction", config_.train.val_fraction}}}};
        write_artifact("pipeline.json", doc);
        log("assembled fusion: " + std::to_string(spec.branches.size()) + " branches, D=" +
            std::to_string(spec.max_dim()) + ", concat=" + std::to_string(spec.concat_dim()));

        if (config_.emit_code_artifact) {
            const CodeArtifact artifact = generate_code_artifact(*gateway_, selections, zoo, spec);
            std::ofstream out(config_.out_dir / "generated_fusion.txt");
            out << artifact.text;
            write_artifact("artifact_validation.json", artifact.validation_json());
            std::size_t passed = 0;
            for (const auto& c : artifact.validation) passed += c.passed ? 1 : 0;
            log("code artifact checks passed " + std::to_string(passed) + "/" +
                std::to_string(artifact.validation.size()));
        }
    }

    void hpo_propose() {
        require_artifact("pipeline.json");
        const nlohmann::json flat = config_.train.flat();
        const DescriptionResult described = describe_hyperparameters(*gateway_, flat);
        if (!described.missing.empty())
            log("descriptions missing for [" + detail::join(described.missing, ", ") + "]");
        const HPOSpace space = propose_search_space(*gateway_, flat, described.descriptions,
                                                    Directive{config_.hpo_directive});
        nlohmann::json desc = nlohmann::json::object();
        for (const auto& [k, v] : described.descriptions) desc[k] = v;
        write_artifact("hpo_space.json", {{"space", space.to_json()},
                                          {"descriptions", desc},
                                          {"missing", described.missing}});
        log("search space has " + std::to_string(space.entries.size()) + " hyperparameters");
    }

    void hpo_run() {
        const auto space_doc = require_artifact("hpo_space.json");
        const HPOSpace space = HPOSpace::from_json(space_doc.at("space"));
        const PipelineContext ctx = load_pipeline();

        const auto objective = [&ctx](const TrainConfig& trial_config) {
            return tablefuse::train(ctx.batch, ctx.split, ctx.spec, trial_config).final_metric;
        };
        const SearchOutcome outcome =
            run_search(space, config_.train, config_.task, objective, config_.hpo);
        write_trials_csv(outcome.records, config_.out_dir / "trials.csv");
        write_best_json(outcome.best, config_.task, config_.out_dir / "best.json");
        if (outcome.empty_space) log("search space empty: trained the base configuration once");
        log("best trial " + std::to_string(outcome.best.index) + " with " +
            std::string(metric_name(config_.task)) + " " + format_metric(outcome.best.metric));
    }

    void train_model() {
        const PipelineContext ctx = load_pipeline();
        TrainConfig train_config = config_.train;
        if (std::filesystem::exists(config_.out_dir / "best.json")) {
            const auto best = read_json(config_.out_dir / "best.json");
            for (const auto& [name, value] : best.at("assignment").items())
                train_config.overlay(name, value);
            log("training with best assignment " + best.at("assignment").dump());
        }
        const TrainOutcome outcome = tablefuse::train(ctx.batch, ctx.split, ctx.spec, train_config);
        write_history_csv(outcome.history, config_.out_dir / "history.csv");

        const Eigen::VectorXd flat = outcome.params.flatten();
        nlohmann::json model = {{"spec", outcome.spec.to_json()},
                                {"final_metric", outcome.final_metric},
                                {"metric_name", metric_name(config_.task)},
                                {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
        write_artifact("model.json", model);
        log("final validation " + std::string(metric_name(config_.task)) + " " +
            format_metric(outcome.final_metric));
    }

    double evaluate_model(const std::string& split_name = "val") {
        const PipelineContext ctx = load_pipeline();
        const auto model = require_artifact("model.json");
        const FusionSpec spec = FusionSpec::from_json(model.at("spec"));
        FusionParams params = FusionParams::init(spec, 0);
        const auto flat_values = model.at("params").get<std::vector<double>>();
        params.load(Eigen::Map<const Eigen::VectorXd>(flat_values.data(),
                                                      static_cast<Eigen::Index>(flat_values.size())));

        std::vector<std::size_t> rows;
        if (split_name == "val")
            rows = ctx.split.val_rows;
        else if (split_name == "train")
            rows = ctx.split.train_rows;
        else
            for (std::size_t i = 0; i < ctx.table.row_count(); ++i) rows.push_back(i);

        const double metric = evaluate(params, ctx.batch.rows(rows), spec, config_.task);
        write_artifact("evaluation.json", {{"split", split_name},
                                           {"metric", metric},
                                           {"metric_name", metric_name(config_.task)},
                                           {"rows", rows.size()}});
        log("evaluation on " + split_name + ": " + format_metric(metric));
        return metric;
    }

    // The five stages in order, then the final report.
    void run_all() {
        std::filesystem::remove(config_.out_dir / "run.log");
        infer_modalities();
        engineer_features();
        select();
        assemble();
        hpo_propose();
        hpo_run();
        train_model();
        write_report();
    }

    nlohmann::json final_report() const { return read_json(config_.out_dir / "report.json"); }

private:
    struct PipelineContext {
        StructuredTable table;  // engineered
        FusionSpec spec;
        SplitIndices split;
        ModalityBatch batch;  // all rows encoded
    };

    std::filesystem::path sidecar_base() const { return config_.table_path.parent_path(); }

    StructuredTable load_input_table() const {
        return load_table(config_.table_path, config_.label_column);
    }

    StructuredTable load_engineered_table() const {
        require_artifact("engineered.csv");
        return load_table(config_.out_dir / "engineered.csv", config_.label_column);
    }

    // Schema restricted to the columns present in the given table.
    ModalitySchema load_schema(const StructuredTable& table) const {
        const auto doc = require_artifact("schema.json");
        const ModalitySchema full = ModalitySchema::from_json(doc);
        ModalitySchema subset;
        for (const auto& c : table.columns) {
            const auto it = full.by_column.find(c);
            if (it == full.by_column.end())
                throw std::runtime_error("schema.json does not cover column: " + c);
            subset.by_column[c] = it->second;
            subset.provenance[c] = full.provenance.at(c);
        }
        subset.validate_covers(table);
        return subset;
    }

    std::map<Modality, SelectionResult> load_selections() const {
        const auto doc = require_artifact("selections.json");
        std::map<Modality, SelectionResult> out;
        for (const auto& [tag, entry] : doc.at("selections").items()) {
            SelectionResult result;
            result.name = entry.at("name").get<std::string>();
            result.reason = entry.at("reason").get<std::string>();
            result.candidates_considered = entry.at("candidates").get<std::vector<std::string>>();
            out[modality_from_tag(tag)] = result;
        }
        return out;
    }

    void load_zoo(ModelZoo& zoo) const {
        if (!config_.zoo_dir.empty() && std::filesystem::is_directory(config_.zoo_dir / "cards")) {
            zoo.load(config_.zoo_dir, *gateway_);
            return;
        }
        populate_builtin_zoo(zoo, *gateway_);
        if (!config_.zoo_dir.empty()) zoo.save(config_.zoo_dir);
    }

    PipelineContext load_pipeline() const {
        const auto doc = require_artifact("pipeline.json");
        PipelineContext ctx;
        ctx.table = load_engineered_table();
        ctx.spec = FusionSpec::from_json(doc.at("fusion_spec"));
        ctx.split = make_split(ctx.table.row_count(),
                               doc.at("split").at("val_fraction").get<double>(),
                               doc.at("split").at("seed").get<std::uint64_t>());
        const ProcessorPlan plan = ProcessorPlan::from_json(doc.at("processor_plan"));
        FittedProcessors fitted;
        fitted.fit(plan, ctx.table, ctx.split.train_rows, sidecar_base());
        std::vector<std::size_t> all_rows(ctx.table.row_count());
        for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;
        ctx.batch = fitted.encode_batch(ctx.table, all_rows, ctx.spec);
        return ctx;
    }

    void write_report() {
        nlohmann::json report = nlohmann::json::object();
        report["schema"] = read_json(config_.out_dir / "schema.json");
        const auto afe = read_json(config_.out_dir / "afe_report.json");
        report["feature_engineering"] = {{"retained", afe.at("retained")},
                                         {"dropped", afe.at("dropped")},
                                         {"filled", afe.at("filled").size()},
                                         {"unresolved", afe.at("unresolved").size()}};
        const auto selections = read_json(config_.out_dir / "selections.json");
        nlohmann::json models = nlohmann::json::object();
        for (const auto& [tag, entry] : selections.at("selections").items())
            models[tag] = {{"name", entry.at("name")}, {"reason", entry.at("reason")}};
        report["selected_models"] = models;
        const auto pipeline = read_json(config_.out_dir / "pipeline.json");
        report["fusion"] = {{"max_dim", pipeline.at("fusion_spec").at("max_dim")},
                            {"concat_dim", pipeline.at("fusion_spec").at("concat_dim")},
                            {"branches", pipeline.at("fusion_spec").at("branches").size()}};
        report["best_hyperparameters"] = read_json(config_.out_dir / "best.json").at("assignment");
        const auto model = read_json(config_.out_dir / "model.json");
        report["final_metric"] = model.at("final_metric");
        report["metric_name"] = model.at("metric_name");
        write_artifact("report.json", report);
        log("run complete: " + model.at("metric_name").get<std::string>() + " " +
            format_metric(model.at("final_metric").get<double>()));
    }

    static std::string format_metric(double value) {
        char buffer[32];
        std::snprintf(buffer, sizeof(buffer), "%.6f", value);
        return buffer;
    }

    static nlohmann::json read_json(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        return nlohmann::json::parse(in);
    }

    nlohmann::json require_artifact(const std::string& name) const {
        const auto path = config_.out_dir / name;
        if (!std::filesystem::exists(path))
            throw std::runtime_error("missing prerequisite artifact '" + name +
                                     "' in " + config_.out_dir.string() +
                                     " (run the earlier stage first)");
        if (path.extension() == ".json") return read_json(path);
        return nlohmann::json();
    }

    void write_artifact(const std::string& name, const nlohmann::json& doc) {
        std::ofstream out(config_.out_dir / name);
        if (!out) throw std::runtime_error("cannot write artifact: " + name);
        out << doc.dump(2) << '\n';
    }

    void log(const std::string& line) {
        std::ofstream out(config_.out_dir / "run.log", std::ios::app);
        out << line << '\n';
        std::cout << line << '\n';
    }

    RunConfig config_;
    std::unique_ptr<LlmGateway> gateway_;
};

}  // namespace tablefuse
