#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "tablefuse/detail/toml.hpp"
#include "tablefuse/gateway.hpp"
#include "tablefuse/hpo.hpp"
#include "tablefuse/modality.hpp"
#include "tablefuse/runtime/trainer.hpp"
#include "tablefuse/task.hpp"

namespace tablefuse {

// Everything a run needs, loaded from a TOML file. Secrets never live here;
// the API key comes from the environment variable named in [gateway].
struct RunConfig {
    std::filesystem::path table_path;
    std::string label_column;
    TaskKind task = TaskKind::binary;

    std::string modality_directive;
    std::string filter_directive;
    std::string impute_directive;
    std::string select_directive;
    std::string hpo_directive;

    std::filesystem::path zoo_dir;  // empty: use the built-in starter zoo
    GatewayConfig gateway;
    std::filesystem::path fixture_path;

    std::filesystem::path out_dir = "run_out";
    std::uint64_t seed = 0;
    std::size_t sample_rows = 5;
    std::map<std::string, Modality> modality_overrides;

    TrainConfig train;
    SearchOptions hpo;
    bool emit_code_artifact = true;

    void validate() const {
        if (table_path.empty()) throw std::invalid_argument("config needs data.table");
        if (label_column.empty()) throw std::invalid_argument("config needs data.label");
        if (out_dir.empty()) throw std::invalid_argument("config needs run.out_dir");
    }

    static RunConfig from_toml_file(const std::filesystem::path& path) {
        RunConfig config = from_toml(detail::load_toml_file(path));
        // Relative paths resolve against the config file's directory.
        const auto base = path.parent_path();
        auto anchor = [&base](std::filesystem::path& p) {
            if (!p.empty() && p.is_relative()) p = base / p;
        };
        anchor(config.table_path);
        anchor(config.zoo_dir);
        anchor(config.fixture_path);
        anchor(config.out_dir);
        return config;
    }

    static RunConfig from_toml(const nlohmann::json& doc) {
        RunConfig config;
        const auto section = [&doc](const char* name) {
            return doc.contains(name) ? doc.at(name) : nlohmann::json::object();
        };

        const auto data = section("data");
        if (data.contains("table")) config.table_path = data.at("table").get<std::string>();
        if (data.contains("label")) config.label_column = data.at("label").get<std::string>();
        if (data.contains("task")) config.task = task_from_tag(data.at("task").get<std::string>());

        const auto directives = section("directives");
        auto directive = [&directives](const char* name) {
            return directives.contains(name) ? directives.at(name).get<std::string>()
                                             : std::string();
        };
        config.modality_directive = directive("modality");
        config.filter_directive = directive("filter");
        config.impute_directive = directive("impute");
        config.select_directive = directive("select");
        config.hpo_directive = directive("hpo");

        const auto zoo = section("zoo");
        if (zoo.contains("dir")) config.zoo_dir = zoo.at("dir").get<std::string>();

        const auto gw = section("gateway");
        if (gw.contains("mode"))
            config.gateway.mode = gateway_mode_from_tag(gw.at("mode").get<std::string>());
        if (gw.contains("base_url")) config.gateway.base_url = gw.at("base_url").get<std::string>();
        if (gw.contains("api_key_env"))
            config.gateway.api_key_env = gw.at("api_key_env").get<std::string>();
        if (gw.contains("chat_model"))
            config.gateway.default_chat_model = gw.at("chat_model").get<std::string>();
        if (gw.contains("codegen_model"))
            config.gateway.codegen_chat_model = gw.at("codegen_model").get<std::string>();
        if (gw.contains("embed_model"))
            config.gateway.embed_model = gw.at("embed_model").get<std::string>();
        if (gw.contains("embedding"))
            config.gateway.fallback_embedder = gw.at("embedding").get<std::string>() != "api";
        if (gw.contains("fixtures")) config.fixture_path = gw.at("fixtures").get<std::string>();
        if (gw.contains("models"))
            for (const auto& [purpose, model] : gw.at("models").items())
                config.gateway.chat_models[purpose] = model.get<std::string>();

        const auto run = section("run");
        if (run.contains("out_dir")) config.out_dir = run.at("out_dir").get<std::string>();
        if (run.contains("seed")) config.seed = run.at("seed").get<std::uint64_t>();
        if (run.contains("sample_rows"))
            config.sample_rows = run.at("sample_rows").get<std::size_t>();
        if (run.contains("codegen")) config.emit_code_artifact = run.at("codegen").get<bool>();

        const auto overrides = section("modality_overrides");
        for (const auto& [column, tag] : overrides.items()) {
            const auto m = normalize_modality_tag(tag.get<std::string>());
            if (!m) throw std::invalid_argument("unknown modality in override: " +
                                                tag.get<std::string>());
            config.modality_overrides[column] = *m;
        }

        const auto train = section("train");
        if (train.contains("learning_rate"))
            config.train.learning_rate = train.at("learning_rate").get<double>();
        if (train.contains("batch_size"))
            config.train.batch_size = train.at("batch_size").get<std::size_t>();
        if (train.contains("epochs")) config.train.epochs = train.at("epochs").get<std::size_t>();
        if (train.contains("val_fraction"))
            config.train.val_fraction = train.at("val_fraction").get<double>();
        if (train.contains("hidden_width"))
            config.train.hidden_width = train.at("hidden_width").get<std::size_t>();
        if (train.contains("loss_weight"))
            config.train.branch_loss_weight = train.at("loss_weight").get<double>();
        config.train.task = config.task;
        config.train.seed = config.seed;

        const auto hpo = section("hpo");
        if (hpo.contains("strategy"))
            config.hpo.strategy = strategy_from_tag(hpo.at("strategy").get<std::string>());
        if (hpo.contains("trials")) config.hpo.trials = hpo.at("trials").get<std::size_t>();
        if (hpo.contains("parallelism"))
            config.hpo.parallelism = hpo.at("parallelism").get<std::size_t>();
        config.hpo.seed = config.seed;

        return config;
    }
};

}  // namespace tablefuse
