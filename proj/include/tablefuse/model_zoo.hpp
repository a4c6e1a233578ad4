#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/detail/strings.hpp"
#include "tablefuse/gateway.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/table.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

struct ModelCard {
    std::string name;
    std::string model_type;
    std::set<Modality> modalities;
    std::string description;
    std::string performance_notes;
    std::string hardware_requirements;
    std::size_t output_feature_dim = 0;
    nlohmann::json config = nlohmann::json::object();  // flat hyperparameter map

    void validate() const {
        if (name.empty()) throw std::invalid_argument("model card needs a name");
        if (modalities.empty()) throw std::invalid_argument("model card needs modalities: " + name);
        if (output_feature_dim < 1)
            throw std::invalid_argument("output_feature_dim must be >= 1: " + name);
        if (!config.is_object()) throw std::invalid_argument("config must be a flat map: " + name);
    }

    bool supports(Modality m) const { return modalities.count(m) > 0; }

    nlohmann::json to_json() const {
        nlohmann::json mods = nlohmann::json::array();
        for (Modality m : all_modalities())
            if (modalities.count(m)) mods.push_back(modality_tag(m));
        return {{"name", name},
                {"model_type", model_type},
                {"modalities", mods},
                {"description", description},
                {"performance_notes", performance_notes},
                {"hardware_requirements", hardware_requirements},
                {"output_feature_dim", output_feature_dim},
                {"config", config}};
    }

    static ModelCard from_json(const nlohmann::json& doc) {
        ModelCard card;
        card.name = doc.at("name").get<std::string>();
        card.model_type = doc.at("model_type").get<std::string>();
        for (const auto& m : doc.at("modalities"))
            card.modalities.insert(modality_from_tag(m.get<std::string>()));
        card.description = doc.at("description").get<std::string>();
        card.performance_notes = doc.at("performance_notes").get<std::string>();
        card.hardware_requirements = doc.at("hardware_requirements").get<std::string>();
        card.output_feature_dim = doc.at("output_feature_dim").get<std::size_t>();
        card.config = doc.at("config");
        card.validate();
        return card;
    }
};

// Stable identifier: filename-safe slug plus a short hash of the exact name.
inline std::string make_card_id(const std::string& name) {
    std::string slug;
    for (unsigned char c : name) slug += std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_';
    return slug + "-" + detail::to_hex(detail::fnv1a64(name)).substr(0, 8);
}

// Canonical rendering embedded as the card's key; also shown to MS-LLM.
inline std::string render_card_text(const ModelCard& card) {
    std::vector<std::string> mods;
    for (Modality m : all_modalities())
        if (card.modalities.count(m)) mods.emplace_back(modality_tag(m));
    return "name: " + card.name + "\ntype: " + card.model_type +
           "\nmodalities: " + detail::join(mods, ", ") + "\ndescription: " + card.description +
           "\nperformance: " + card.performance_notes +
           "\nhardware: " + card.hardware_requirements;
}

struct SelectionResult {
    std::string name;
    std::string reason;
    std::vector<std::string> candidates_considered;

    nlohmann::json to_json() const {
        return {{"name", name}, {"reason", reason}, {"candidates", candidates_considered}};
    }
};

namespace detail {

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine of mismatched dimensions");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct RankedCard {
    double similarity;
    ModelCard card;
};

// Full sort by similarity descending, ties broken by name ascending; the
// exhaustive oracle in tests reproduces exactly this ordering.
inline std::vector<RankedCard> rank_cards(
    const std::vector<double>& request,
    const std::vector<std::pair<std::vector<double>, ModelCard>>& pool, std::size_t k) {
    std::vector<RankedCard> ranked;
    ranked.reserve(pool.size());
    for (const auto& [vec, card] : pool) ranked.push_back({cosine_similarity(request, vec), card});
    std::sort(ranked.begin(), ranked.end(), [](const RankedCard& x, const RankedCard& y) {
        if (x.similarity != y.similarity) return x.similarity > y.similarity;
        return x.card.name < y.card.name;
    });
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

}  // namespace detail

// Model-card registry with an exact linear-scan cosine index. Reads are
// concurrent; add_card takes the write lock; rebuild swaps atomically.
class ModelZoo {
public:
    std::string add_card(LlmGateway& gateway, ModelCard card) {
        card.validate();
        const std::vector<double> vec = gateway.embed(render_card_text(card));
        std::unique_lock lock(mutex_);
        if (find_name_locked(card.name))
            throw std::invalid_argument("duplicate model card name: " + card.name);
        if (embedding_dim_ == 0)
            embedding_dim_ = vec.size();
        else if (vec.size() != embedding_dim_)
            throw std::runtime_error("embedding dimension mismatch for card '" + card.name +
                                     "': got " + std::to_string(vec.size()) + ", index has " +
                                     std::to_string(embedding_dim_));
        const std::string id = make_card_id(card.name);
        entries_[id] = {vec, std::move(card)};
        return id;
    }

    ModelCard card(const std::string& card_id) const {
        std::shared_lock lock(mutex_);
        const auto it = entries_.find(card_id);
        if (it == entries_.end()) throw std::out_of_range("unknown card id: " + card_id);
        return it->second.card;
    }

    std::optional<ModelCard> find_by_name(const std::string& name) const {
        std::shared_lock lock(mutex_);
        if (const auto* e = find_name_locked(name)) return e->card;
        return std::nullopt;
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    std::size_t embedding_dim() const {
        std::shared_lock lock(mutex_);
        return embedding_dim_;
    }

    std::vector<ModelCard> cards() const {
        std::shared_lock lock(mutex_);
        std::vector<ModelCard> out;
        for (const auto& [id, e] : entries_) out.push_back(e.card);
        return out;
    }

    // Modality filter first, then top-k by cosine similarity to the request.
    std::vector<detail::RankedCard> retrieve_candidates(LlmGateway& gateway, Modality modality,
                                                        const Directive& user_request,
                                                        std::size_t k = 5) const {
        if (user_request.text.empty())
            throw std::invalid_argument("retrieval needs a non-empty request");
        const std::vector<double> request = gateway.embed(user_request.text);

        std::vector<std::pair<std::vector<double>, ModelCard>> pool;
        {
            std::shared_lock lock(mutex_);
            if (entries_.empty()) throw std::runtime_error("model zoo is empty");
            for (const auto& [id, e] : entries_)
                if (e.card.supports(modality)) pool.emplace_back(e.embedding, e.card);
        }
        if (pool.empty())
            throw std::runtime_error(std::string("no model card supports modality '") +
                                     modality_tag(modality) + "'");
        return detail::rank_cards(request, pool, k);
    }

    // cards/*.json plus a vectors.json sidecar; rebuildable from cards alone.
    void save(const std::filesystem::path& dir) const {
        std::shared_lock lock(mutex_);
        std::filesystem::create_directories(dir / "cards");
        nlohmann::json vectors = nlohmann::json::object();
        vectors["embedding_dim"] = embedding_dim_;
        nlohmann::json by_id = nlohmann::json::object();
        for (const auto& [id, e] : entries_) {
            std::ofstream out(dir / "cards" / (id + ".json"));
            if (!out) throw std::runtime_error("cannot write card file for " + id);
            out << e.card.to_json().dump(2) << '\n';
            by_id[id] = e.embedding;
        }
        vectors["vectors"] = by_id;
        std::ofstream out(dir / "vectors.json");
        if (!out) throw std::runtime_error("cannot write vectors.json");
        out << vectors.dump() << '\n';
    }

    void load(const std::filesystem::path& dir, LlmGateway& gateway) {
        const auto cards_dir = dir / "cards";
        if (!std::filesystem::is_directory(cards_dir))
            throw std::runtime_error("no card directory at " + cards_dir.string());

        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(cards_dir))
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        std::sort(files.begin(), files.end());

        nlohmann::json stored_vectors;
        if (std::filesystem::exists(dir / "vectors.json")) {
            std::ifstream in(dir / "vectors.json");
            stored_vectors = nlohmann::json::parse(in);
        }

        std::map<std::string, Entry> fresh;
        std::size_t dim = 0;
        for (const auto& file : files) {
            std::ifstream in(file);
            ModelCard card = ModelCard::from_json(nlohmann::json::parse(in));
            const std::string id = make_card_id(card.name);
            std::vector<double> vec;
            if (stored_vectors.contains("vectors") && stored_vectors["vectors"].contains(id))
                vec = stored_vectors["vectors"][id].get<std::vector<double>>();
            else
                vec = gateway.embed(render_card_text(card));
            if (dim == 0)
                dim = vec.size();
            else if (vec.size() != dim)
                throw std::runtime_error("embedding dimension mismatch in stored zoo for " + id);
            fresh[id] = {std::move(vec), std::move(card)};
        }

        std::unique_lock lock(mutex_);
        entries_.swap(fresh);
        embedding_dim_ = dim;
    }

    // Re-embeds every card and swaps the index in one step.
    void rebuild_index(LlmGateway& gateway) {
        std::map<std::string, Entry> fresh;
        std::size_t dim = 0;
        {
            std::shared_lock lock(mutex_);
            fresh = entries_;
        }
        for (auto& [id, e] : fresh) {
            e.embedding = gateway.embed(render_card_text(e.card));
            if (dim == 0) dim = e.embedding.size();
        }
        std::unique_lock lock(mutex_);
        entries_.swap(fresh);
        embedding_dim_ = dim;
    }

private:
    struct Entry {
        std::vector<double> embedding;
        ModelCard card;
    };

    const Entry* find_name_locked(const std::string& name) const {
        for (const auto& [id, e] : entries_)
            if (e.card.name == name) return &e;
        return nullptr;
    }

    std::map<std::string, Entry> entries_;
    std::size_t embedding_dim_ = 0;
    mutable std::shared_mutex mutex_;
};

inline PromptBundle build_select_prompt(const std::vector<ModelCard>& candidates,
                                        const std::string& data_description,
                                        const Directive& user_request) {
    std::string rendered;
    for (const auto& c : candidates) rendered += render_card_text(c) + "\n---\n";
    PromptBundle bundle;
    bundle.purpose = Purpose::select;
    bundle.system_text = prompts::substitute(prompts::kSelectSystem, "model_cards", rendered);
    bundle.user_text = "User: Assume we have a dataset:" + data_description +
                       " and user request: " + user_request.text +
                       ",please select the most suitable model.\nYour answer:";
    bundle.validate();
    return bundle;
}

// Single-choice selection over at most five candidates. One candidate skips
// the LLM entirely; a name outside the candidate set gets one corrective
// retry, then fails.
inline SelectionResult select_model(LlmGateway& gateway, const std::vector<ModelCard>& candidates,
                                    const std::string& data_description,
                                    const Directive& user_request) {
    if (candidates.empty()) throw std::invalid_argument("no candidates to select from");
    if (candidates.size() > 5) throw std::invalid_argument("at most 5 candidates allowed");

    SelectionResult result;
    for (const auto& c : candidates) result.candidates_considered.push_back(c.name);

    if (candidates.size() == 1) {
        result.name = candidates.front().name;
        result.reason = "sole candidate";
        return result;
    }

    const PromptBundle bundle = build_select_prompt(candidates, data_description, user_request);
    auto answer = complete_json(gateway, bundle, ShapeRecord{{"name", "reason"}});

    auto member = [&](const std::string& name) {
        return std::find(result.candidates_considered.begin(), result.candidates_considered.end(),
                         name) != result.candidates_considered.end();
    };

    std::string name = answer.at("name").get<std::string>();
    if (!member(name)) {
        const std::string correction =
            "Your previous answer named '" + name +
            "', which is not one of the provided models. Answer again choosing strictly from: " +
            detail::join(result.candidates_considered, ", ") + ".";
        answer = complete_json(gateway, bundle.with_correction(correction),
                               ShapeRecord{{"name", "reason"}});
        name = answer.at("name").get<std::string>();
        if (!member(name))
            throw std::runtime_error("selected model '" + name + "' is not among the candidates");
    }
    result.name = name;
    result.reason = answer.at("reason").get<std::string>();
    return result;
}

// Data description shown to MS-LLM: task kind, label type, metric, and
// per-modality feature counts.
inline std::string build_data_description(const ModalitySchema& schema,
                                          const StructuredTable& table, TaskKind task) {
    std::string features;
    for (Modality m : schema.feature_modalities(table)) {
        const auto cols = schema.columns_of(m, table);
        if (!features.empty()) features += ", ";
        features += std::to_string(cols.size()) + " " + modality_tag(m);
    }
    std::string label = "none";
    if (table.label_column)
        label = "'" + *table.label_column + "' (" + modality_tag(schema.at(*table.label_column)) + ")";
    return std::string("task: ") + task_tag(task) + "; label: " + label +
           "; metric: " + metric_name(task) + "; feature columns: " + features;
}

// Retrieve-then-select for every feature modality, in canonical order.
inline std::map<Modality, SelectionResult> select_per_modality(
    LlmGateway& gateway, const ModelZoo& zoo, const ModalitySchema& schema,
    const StructuredTable& table, const std::string& data_description,
    const Directive& user_request) {
    const auto kinds = schema.feature_modalities(table);
    if (kinds.empty()) throw std::runtime_error("no feature modalities in schema");

    std::map<Modality, SelectionResult> out;
    for (Modality m : kinds) {
        try {
            const auto ranked = zoo.retrieve_candidates(gateway, m, user_request);
            std::vector<ModelCard> candidates;
            for (const auto& r : ranked) candidates.push_back(r.card);
            out[m] = select_model(gateway, candidates, data_description, user_request);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("selection failed for modality '") +
                                     modality_tag(m) + "': " + e.what());
        }
    }
    return out;
}

}  // namespace tablefuse
