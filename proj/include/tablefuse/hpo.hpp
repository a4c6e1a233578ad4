#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tablefuse/detail/parallel.hpp"
#include "tablefuse/detail/rng.hpp"
#include "tablefuse/detail/strings.hpp"
#include "tablefuse/gateway.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/runtime/trainer.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

// Discrete list of candidate values for one hyperparameter.
struct SearchRange {
    std::vector<nlohmann::json> values;

    bool numeric() const {
        if (values.empty()) return false;
        for (const auto& v : values)
            if (!as_number(v)) return false;
        return true;
    }

    static std::optional<double> as_number(const nlohmann::json& v) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) return detail::parse_number(v.get<std::string>());
        return std::nullopt;
    }

    bool contains_number(double x) const {
        for (const auto& v : values) {
            const auto n = as_number(v);
            if (n && std::abs(*n - x) <= 1e-9 * std::max({1.0, std::abs(*n), std::abs(x)}))
                return true;
        }
        return false;
    }
};

// Accepts a JSON array of scalars or the "[v1,v2,v3]" string form.
inline SearchRange parse_search_range(const nlohmann::json& value) {
    SearchRange range;
    if (value.is_array()) {
        for (const auto& v : value) {
            if (!v.is_primitive() || v.is_null())
                throw JsonContractError("search range values must be scalars");
            range.values.push_back(v);
        }
    } else if (value.is_string()) {
        std::string s = detail::trim(value.get<std::string>());
        if (s.size() < 2 || s.front() != '[' || s.back() != ']')
            throw JsonContractError("search range string must look like [v1,v2,v3]: " + s);
        s = s.substr(1, s.size() - 2);
        for (const auto& raw : detail::split(s, ',')) {
            std::string token = detail::trim(raw);
            if (token.empty()) continue;
            if (token.size() >= 2 && ((token.front() == '"' && token.back() == '"') ||
                                      (token.front() == '\'' && token.back() == '\'')))
                token = token.substr(1, token.size() - 2);
            const auto n = detail::parse_number(token);
            range.values.push_back(n ? nlohmann::json(*n) : nlohmann::json(token));
        }
    } else {
        throw JsonContractError("search range must be a list or a string");
    }
    if (range.values.empty()) throw JsonContractError("empty search range");
    return range;
}

struct HPOSpace {
    std::vector<std::pair<std::string, SearchRange>> entries;

    bool empty() const { return entries.empty(); }

    nlohmann::json to_json() const {
        nlohmann::json doc = nlohmann::json::object();
        for (const auto& [name, range] : entries) doc[name] = range.values;
        return doc;
    }

    static HPOSpace from_json(const nlohmann::json& doc) {
        HPOSpace space;
        for (const auto& [name, value] : doc.items())
            space.entries.emplace_back(name, parse_search_range(value));
        return space;
    }
};

// Violations of the search-space contract, in deterministic order. Empty
// means the space is acceptable against the given configuration.
inline std::vector<std::string> search_space_violations(const HPOSpace& space,
                                                        const nlohmann::json& config) {
    std::vector<std::string> out;
    if (space.entries.size() > 3)
        out.push_back("more than 3 hyperparameters were chosen (" +
                      std::to_string(space.entries.size()) + ")");
    const bool has_checkpoint = config.contains("checkpoint_name");
    for (const auto& [name, range] : space.entries) {
        if (!config.contains(name)) {
            out.push_back("hyperparameter '" + name + "' is not in the configuration file");
            continue;
        }
        if (has_checkpoint && name != "loss_weight") {
            out.push_back("'" + name +
                          "' is not tunable: checkpoint_name is in the config, so only "
                          "loss_weight is taken");
            continue;
        }
        if (range.numeric()) {
            if (range.values.size() < 3)
                out.push_back("numeric search range of '" + name + "' needs at least 3 values");
            const auto original = SearchRange::as_number(config.at(name));
            if (!original || !range.contains_number(*original))
                out.push_back("search range of '" + name +
                              "' does not include the original config value");
        }
    }
    return out;
}

inline PromptBundle build_hpo_describe_prompt(const nlohmann::json& config) {
    PromptBundle bundle;
    bundle.purpose = Purpose::hpo_describe;
    bundle.system_text = prompts::kHpoDescribeSystem;
    bundle.user_text = "Given the config as follow: " + config.dump() + "\nYour answer:";
    bundle.validate();
    return bundle;
}

struct DescriptionResult {
    std::map<std::string, std::string> descriptions;
    std::vector<std::string> missing;  // names the answer omitted
};

// One call describing every hyperparameter; omissions get a placeholder.
inline DescriptionResult describe_hyperparameters(LlmGateway& gateway,
                                                  const nlohmann::json& config) {
    if (config.empty()) throw std::invalid_argument("empty configuration");
    const auto doc = complete_json(gateway, build_hpo_describe_prompt(config), ShapeStringMap{});
    DescriptionResult result;
    for (const auto& [name, value] : config.items()) {
        if (doc.contains(name)) {
            result.descriptions[name] = doc.at(name).get<std::string>();
        } else {
            result.descriptions[name] = "no description provided";
            result.missing.push_back(name);
        }
    }
    return result;
}

inline PromptBundle build_hpo_space_prompt(const nlohmann::json& config,
                                           const std::map<std::string, std::string>& descriptions,
                                           const Directive& directive) {
    nlohmann::json desc = nlohmann::json::object();
    for (const auto& [name, text] : descriptions) desc[name] = text;
    PromptBundle bundle;
    bundle.purpose = Purpose::hpo_space;
    bundle.system_text = prompts::kHpoSpaceSystem;
    bundle.user_text = "Here are some comments to help you understand the parameters better: " +
                       desc.dump() + "\nGiven the config as follow: " + config.dump() +
                       "\nGiven the user requirements: " + directive.text + "\nYour answer:";
    bundle.validate();
    return bundle;
}

// Search-space proposal with full contract validation and one corrective
// retry; every violation message cites the broken rule.
inline HPOSpace propose_search_space(LlmGateway& gateway, const nlohmann::json& config,
                                     const std::map<std::string, std::string>& descriptions,
                                     const Directive& directive) {
    if (config.empty()) throw std::invalid_argument("empty configuration");
    const PromptBundle bundle = build_hpo_space_prompt(config, descriptions, directive);

    auto parse = [](const nlohmann::json& doc) { return HPOSpace::from_json(doc); };
    auto doc = complete_json(gateway, bundle, ShapeRangeMap{});
    HPOSpace space = parse(doc);
    auto violations = search_space_violations(space, config);
    if (!violations.empty()) {
        const std::string correction =
            "Your previous answer was invalid: " + detail::join(violations, "; ") +
            ". Answer again with a strict JSON object obeying every rule.";
        doc = complete_json(gateway, bundle.with_correction(correction), ShapeRangeMap{});
        space = parse(doc);
        violations = search_space_violations(space, config);
        if (!violations.empty())
            throw std::runtime_error("search space rejected after retry: " + violations.front());
    }
    return space;
}

struct TrialRecord {
    std::size_t index = 0;
    std::map<std::string, nlohmann::json> assignment;
    double metric = std::numeric_limits<double>::quiet_NaN();
    bool divergent = false;

    nlohmann::json assignment_json() const {
        nlohmann::json doc = nlohmann::json::object();
        for (const auto& [k, v] : assignment) doc[k] = v;
        return doc;
    }
};

struct SearchOutcome {
    TrialRecord best;
    std::vector<TrialRecord> records;
    bool empty_space = false;
};

enum class SearchStrategy { random, grid };

inline SearchStrategy strategy_from_tag(const std::string& tag) {
    if (tag == "random") return SearchStrategy::random;
    if (tag == "grid") return SearchStrategy::grid;
    throw std::invalid_argument("unknown search strategy: " + tag);
}

struct SearchOptions {
    std::size_t trials = 8;
    SearchStrategy strategy = SearchStrategy::random;
    std::uint64_t seed = 0;
    std::size_t parallelism = 1;
};

// Executes the search over a caller-provided objective (one full training
// run per assignment, returning the validation metric). Divergent trials
// rank worst but never abort the sweep. Ties go to the earliest trial.
inline SearchOutcome run_search(const HPOSpace& space, const TrainConfig& base_config,
                                TaskKind task,
                                const std::function<double(const TrainConfig&)>& objective,
                                const SearchOptions& options) {
    const bool maximize = metric_higher_is_better(task);

    std::vector<std::map<std::string, nlohmann::json>> assignments;
    if (space.empty()) {
        assignments.push_back({});
    } else if (options.strategy == SearchStrategy::grid) {
        std::vector<std::size_t> odometer(space.entries.size(), 0);
        for (;;) {
            std::map<std::string, nlohmann::json> a;
            for (std::size_t i = 0; i < space.entries.size(); ++i)
                a[space.entries[i].first] = space.entries[i].second.values[odometer[i]];
            assignments.push_back(std::move(a));
            std::size_t i = space.entries.size();
            while (i-- > 0) {
                if (++odometer[i] < space.entries[i].second.values.size()) break;
                odometer[i] = 0;
                if (i == 0) goto grid_done;
            }
        }
    grid_done:;
    } else {
        if (options.trials < 1) throw std::invalid_argument("random search needs trials >= 1");
        detail::Rng rng(options.seed);
        for (std::size_t t = 0; t < options.trials; ++t) {
            std::map<std::string, nlohmann::json> a;
            for (const auto& [name, range] : space.entries)
                a[name] = range.values[rng.bounded(range.values.size())];
            assignments.push_back(std::move(a));
        }
    }

    SearchOutcome outcome;
    outcome.empty_space = space.empty();
    outcome.records.resize(assignments.size());

    detail::parallel_for(assignments.size(), std::max<std::size_t>(1, options.parallelism),
                         [&](std::size_t t) {
                             TrialRecord record;
                             record.index = t;
                             record.assignment = assignments[t];
                             TrainConfig config = base_config;
                             try {
                                 for (const auto& [name, value] : assignments[t])
                                     config.overlay(name, value);
                                 record.metric = objective(config);
                                 record.divergent = !std::isfinite(record.metric);
                             } catch (const std::exception&) {
                                 record.divergent = true;
                             }
                             outcome.records[t] = std::move(record);
                         });

    auto better = [maximize](const TrialRecord& a, const TrialRecord& b) {
        if (a.divergent != b.divergent) return !a.divergent;
        if (a.divergent) return a.index < b.index;
        if (a.metric != b.metric) return maximize ? a.metric > b.metric : a.metric < b.metric;
        return a.index < b.index;
    };
    outcome.best = outcome.records.front();
    for (const auto& r : outcome.records)
        if (better(r, outcome.best)) outcome.best = r;
    return outcome;
}

inline void write_trials_csv(const std::vector<TrialRecord>& records,
                             const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trials: " + path.string());
    out << "trial,assignment,metric,divergent\n";
    out.precision(12);
    for (const auto& r : records) {
        out << r.index << ',' << csv::quote_field(r.assignment_json().dump()) << ',';
        if (r.divergent)
            out << "nan";
        else
            out << r.metric;
        out << ',' << (r.divergent ? 1 : 0) << '\n';
    }
}

inline void write_best_json(const TrialRecord& best, TaskKind task,
                            const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write best: " + path.string());
    nlohmann::json doc = {{"trial", best.index},
                          {"assignment", best.assignment_json()},
                          {"metric", best.divergent ? nlohmann::json() : nlohmann::json(best.metric)},
                          {"metric_name", metric_name(task)},
                          {"divergent", best.divergent}};
    out << doc.dump(2) << '\n';
}

}  // namespace tablefuse
