#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/gateway.hpp"
#include "tablefuse/model_zoo.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/table.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

struct FusionBranch {
    Modality modality = Modality::numerical;
    std::string model_name;
    std::size_t feature_dim = 0;   // adapter input width d_i
    std::size_t card_dim = 0;      // the selected card's nominal output width
};

// Late-fusion architecture: per-branch adapters lift every d_i to the
// maximum dimension D, fused features are the n*D concatenation, and an MLP
// body plus linear head produce the fused logits.
struct FusionSpec {
    std::vector<FusionBranch> branches;  // canonical modality order
    std::vector<std::size_t> hidden_widths;
    std::size_t output_dim = 1;
    double fusion_weight = 1.0;
    std::vector<double> branch_weights;  // aligned with branches

    std::size_t max_dim() const {
        std::size_t d = 0;
        for (const auto& b : branches) d = std::max(d, b.feature_dim);
        return d;
    }
    std::size_t concat_dim() const { return branches.size() * max_dim(); }

    void validate() const {
        if (branches.empty()) throw std::invalid_argument("fusion spec needs at least one branch");
        if (output_dim < 1) throw std::invalid_argument("output_dim must be >= 1");
        if (branch_weights.size() != branches.size())
            throw std::invalid_argument("branch weight count must match branches");
        double total = fusion_weight;
        for (double w : branch_weights) {
            if (w < 0) throw std::invalid_argument("loss weights must be non-negative");
            total += w;
        }
        if (fusion_weight < 0) throw std::invalid_argument("loss weights must be non-negative");
        if (total <= 0) throw std::invalid_argument("at least one loss weight must be positive");
        for (const auto& b : branches) {
            if (b.feature_dim < 1) throw std::invalid_argument("branch feature_dim must be >= 1");
            if (b.model_name.empty()) throw std::invalid_argument("branch needs a model name");
        }
        for (std::size_t i = 1; i < branches.size(); ++i)
            if (static_cast<int>(branches[i - 1].modality) >= static_cast<int>(branches[i].modality))
                throw std::invalid_argument("branches must follow the canonical modality order");
    }

    nlohmann::json to_json() const {
        nlohmann::json bs = nlohmann::json::array();
        for (std::size_t i = 0; i < branches.size(); ++i) {
            const auto& b = branches[i];
            bs.push_back({{"modality", modality_tag(b.modality)},
                          {"model", b.model_name},
                          {"feature_dim", b.feature_dim},
                          {"card_dim", b.card_dim},
                          {"adapter_out", max_dim()},
                          {"loss_weight", branch_weights[i]}});
        }
        return {{"branches", bs},          {"max_dim", max_dim()},
                {"concat_dim", concat_dim()}, {"hidden_widths", hidden_widths},
                {"output_dim", output_dim}, {"fusion_weight", fusion_weight}};
    }

    static FusionSpec from_json(const nlohmann::json& doc) {
        FusionSpec spec;
        for (const auto& b : doc.at("branches")) {
            spec.branches.push_back({modality_from_tag(b.at("modality").get<std::string>()),
                                     b.at("model").get<std::string>(),
                                     b.at("feature_dim").get<std::size_t>(),
                                     b.value("card_dim", std::size_t{0})});
            spec.branch_weights.push_back(b.at("loss_weight").get<double>());
        }
        spec.hidden_widths = doc.at("hidden_widths").get<std::vector<std::size_t>>();
        spec.output_dim = doc.at("output_dim").get<std::size_t>();
        spec.fusion_weight = doc.at("fusion_weight").get<double>();
        spec.validate();
        return spec;
    }
};

// Branches follow the canonical modality order regardless of how the
// selection map was produced. dim_overrides substitutes each branch's
// feature_dim (the desk runtime uses fitted processor widths there); without
// an override the card's nominal output dimension is used. Adapters exist for
// every branch, including those already at D. Default weights are all one.
inline FusionSpec build_fusion_spec(const std::map<Modality, SelectionResult>& selections,
                                    const ModelZoo& zoo, std::size_t output_dim,
                                    std::vector<std::size_t> hidden_widths = {},
                                    const std::map<Modality, std::size_t>& dim_overrides = {}) {
    if (selections.empty()) throw std::invalid_argument("no selections to assemble");
    if (output_dim < 1) throw std::invalid_argument("output_dim must be >= 1");

    FusionSpec spec;
    spec.output_dim = output_dim;
    for (Modality m : all_modalities()) {
        const auto it = selections.find(m);
        if (it == selections.end()) continue;
        const auto card = zoo.find_by_name(it->second.name);
        if (!card) throw std::runtime_error("selected model not in zoo: " + it->second.name);
        FusionBranch branch;
        branch.modality = m;
        branch.model_name = card->name;
        branch.card_dim = card->output_feature_dim;
        const auto ov = dim_overrides.find(m);
        branch.feature_dim = ov != dim_overrides.end() ? ov->second : card->output_feature_dim;
        spec.branches.push_back(branch);
        spec.branch_weights.push_back(1.0);
    }
    if (hidden_widths.empty()) hidden_widths = {spec.max_dim(), spec.max_dim()};
    spec.hidden_widths = std::move(hidden_widths);
    spec.validate();
    return spec;
}

// Descriptor for one modality's raw-to-numeric transformation, with fitted
// parameters once fit() ran.
struct ProcessorDescriptor {
    std::string kind;  // standardize | one_hot | hashed_ngrams | sidecar_vector | class_index | identity
    std::vector<std::string> columns;
    nlohmann::json params = nlohmann::json::object();

    nlohmann::json to_json() const { return {{"kind", kind}, {"columns", columns}, {"params", params}}; }
    static ProcessorDescriptor from_json(const nlohmann::json& doc) {
        return {doc.at("kind").get<std::string>(),
                doc.at("columns").get<std::vector<std::string>>(), doc.at("params")};
    }
};

struct ProcessorPlan {
    std::map<Modality, ProcessorDescriptor> by_modality;  // keyed by modality: no fusion entry possible
    ProcessorDescriptor label_processor;

    nlohmann::json to_json() const {
        nlohmann::json mods = nlohmann::json::object();
        for (const auto& [m, d] : by_modality) mods[modality_tag(m)] = d.to_json();
        return {{"modalities", mods}, {"label", label_processor.to_json()}};
    }
    static ProcessorPlan from_json(const nlohmann::json& doc) {
        ProcessorPlan plan;
        for (const auto& [tag, d] : doc.at("modalities").items())
            plan.by_modality[modality_from_tag(tag)] = ProcessorDescriptor::from_json(d);
        plan.label_processor = ProcessorDescriptor::from_json(doc.at("label"));
        return plan;
    }
};

inline constexpr std::size_t kTextHashWidth = 64;  // per text column

// One descriptor per feature modality plus the label processor; there is
// deliberately no entry for the fusion model itself.
inline ProcessorPlan build_processor_plan(const ModalitySchema& schema,
                                          const std::map<Modality, SelectionResult>& selections,
                                          const StructuredTable& table, TaskKind task) {
    ProcessorPlan plan;
    for (Modality m : schema.feature_modalities(table)) {
        if (!selections.count(m))
            throw std::runtime_error(std::string("no selection for modality '") + modality_tag(m) +
                                     "'");
        ProcessorDescriptor d;
        d.columns = schema.columns_of(m, table);
        switch (m) {
            case Modality::numerical: d.kind = "standardize"; break;
            case Modality::categorical: d.kind = "one_hot"; break;
            case Modality::text:
                d.kind = "hashed_ngrams";
                d.params["width"] = kTextHashWidth;
                break;
            case Modality::image_path:
            case Modality::video_path: d.kind = "sidecar_vector"; break;
            case Modality::identifier: continue;
        }
        plan.by_modality[m] = std::move(d);
    }
    if (table.label_column) {
        plan.label_processor.columns = {*table.label_column};
        plan.label_processor.kind = task == TaskKind::regression ? "identity" : "class_index";
    }
    return plan;
}

struct ValidationCheck {
    std::string name;
    bool passed = false;
};

struct CodeArtifact {
    std::string text;
    std::vector<ValidationCheck> validation;

    bool all_passed() const {
        return std::all_of(validation.begin(), validation.end(),
                           [](const ValidationCheck& c) { return c.passed; });
    }
    nlohmann::json validation_json() const {
        nlohmann::json checks = nlohmann::json::array();
        for (const auto& c : validation) checks.push_back({{"check", c.name}, {"passed", c.passed}});
        return checks;
    }
};

// Pure text inspection; the artifact is never executed or written anywhere
// executable.
inline std::vector<ValidationCheck> validate_code_artifact(const std::string& text,
                                                           const FusionSpec& spec) {
    std::vector<ValidationCheck> checks;
    auto has = [&text](const std::string& token) { return text.find(token) != std::string::npos; };

    checks.push_back({"mentions fusion_model", has("fusion_model")});
    checks.push_back({"mentions fusion_head", has("fusion_head")});
    for (const auto& b : spec.branches)
        checks.push_back({"references base model " + b.model_name, has(b.model_name)});
    checks.push_back({"outputs logits key", has("logits")});
    checks.push_back({"outputs features key", has("features")});
    checks.push_back({"outputs weight key", has("weight")});
    checks.push_back({"mentions max dimension " + std::to_string(spec.max_dim()),
                      has(std::to_string(spec.max_dim()))});
    return checks;
}

inline PromptBundle build_fusion_codegen_prompt(const std::map<Modality, SelectionResult>& selections,
                                                const ModelZoo& zoo, const FusionSpec& spec) {
    nlohmann::json base_configs = nlohmann::json::array();
    for (const auto& b : spec.branches) {
        const auto card = zoo.find_by_name(b.model_name);
        if (!card) throw std::runtime_error("selected model not in zoo: " + b.model_name);
        nlohmann::json cfg = card->config;
        cfg["model_name"] = card->name;
        cfg["out_features_dim"] = b.feature_dim;
        base_configs.push_back(cfg);
    }
    const nlohmann::json fusion_config = {{"max_dim", spec.max_dim()},
                                          {"concat_dim", spec.concat_dim()},
                                          {"hidden_widths", spec.hidden_widths},
                                          {"output_dim", spec.output_dim},
                                          {"fusion_weight", spec.fusion_weight}};

    PromptBundle bundle;
    bundle.purpose = Purpose::assemble_fusion;
    std::string system = prompts::substitute(prompts::kFusionSystem, "base_configs", base_configs.dump());
    system = prompts::substitute(system, "fusion_config", fusion_config.dump());
    bundle.system_text = system;
    bundle.user_text = "Your answer:";
    bundle.validate();
    (void)selections;
    return bundle;
}

// Emits the generated fusion source and runs the structural checks. The
// executable path stays the deterministic internal runtime; this artifact is
// inspected, never run.
inline CodeArtifact generate_code_artifact(LlmGateway& gateway,
                                           const std::map<Modality, SelectionResult>& selections,
                                           const ModelZoo& zoo, const FusionSpec& spec) {
    spec.validate();
    const PromptBundle bundle = build_fusion_codegen_prompt(selections, zoo, spec);
    const LLMResponse res = gateway.complete(bundle);
    if (res.text.empty()) throw std::runtime_error("code generation returned an empty artifact");
    CodeArtifact artifact;
    artifact.text = res.text;
    artifact.validation = validate_code_artifact(artifact.text, spec);
    return artifact;
}

}  // namespace tablefuse
