#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "tablefuse/corruption.hpp"
#include "tablefuse/http_transport.hpp"
#include "tablefuse/orchestrator.hpp"
#include "tablefuse/synthetic.hpp"

namespace fs = std::filesystem;
using namespace tablefuse;

namespace {

LlmGateway offline_embed_gateway() {
    GatewayConfig cfg;
    cfg.mode = GatewayMode::replay;  // zoo commands only need the fallback embedder
    return LlmGateway(cfg, nullptr);
}

Orchestrator make_orchestrator(const std::string& config_path) {
    RunConfig config = RunConfig::from_toml_file(config_path);
    auto transport = make_http_transport(config.gateway);
    return Orchestrator(std::move(config), std::move(transport));
}

void load_zoo_dir(ModelZoo& zoo, LlmGateway& gateway, const std::string& dir) {
    if (!fs::is_directory(fs::path(dir) / "cards"))
        throw std::runtime_error("no zoo at " + dir + " (run 'zoo init' first)");
    zoo.load(dir, gateway);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LLM-orchestrated multimodal late-fusion AutoML"};
    app.require_subcommand(1);
    std::function<void()> action;

    // synth
    {
        auto* cmd = app.add_subcommand("synth", "Generate the synthetic multimodal dataset");
        auto rows = std::make_shared<std::size_t>(500);
        auto seed = std::make_shared<std::uint64_t>(7);
        auto out = std::make_shared<std::string>("data");
        auto csv_name = std::make_shared<std::string>("table.csv");
        cmd->add_option("--rows", *rows, "Row count (>= 2)");
        cmd->add_option("--seed", *seed, "Generator seed");
        cmd->add_option("--out", *out, "Output directory")->required();
        cmd->add_option("--csv-name", *csv_name, "CSV file name");
        cmd->callback([&action, rows, seed, out, csv_name] {
            action = [=] {
                const auto ds = generate_synthetic_dataset(*rows, *seed);
                write_dataset(ds, *out, *csv_name);
                std::cout << "wrote " << (fs::path(*out) / *csv_name).string() << " (" << *rows
                          << " rows) and " << ds.sidecars.size() << " feature files\n";
            };
        });
    }

    // corrupt
    {
        auto* cmd = app.add_subcommand("corrupt", "Mask cells and append noise columns");
        auto table = std::make_shared<std::string>();
        auto label = std::make_shared<std::string>();
        auto fraction = std::make_shared<double>(0.2);
        auto noise = std::make_shared<std::size_t>(3);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto out_table = std::make_shared<std::string>();
        auto out_plan = std::make_shared<std::string>();
        cmd->add_option("--table", *table, "Input CSV")->required();
        cmd->add_option("--label", *label, "Label column (never masked)")->required();
        cmd->add_option("--mask-fraction", *fraction, "Fraction of eligible cells to mask");
        cmd->add_option("--noise-columns", *noise, "Noise columns to append");
        cmd->add_option("--seed", *seed, "Corruption seed");
        cmd->add_option("--out-table", *out_table,
                        "Output CSV (default: corrupted.csv beside input)");
        cmd->add_option("--out-plan", *out_plan,
                        "Plan JSON (default: corruption_plan.json beside input)");
        cmd->callback([&action, table, label, fraction, noise, seed, out_table, out_plan] {
            action = [=] {
                const auto input = load_table(*table, *label);
                const auto result = corrupt(input, *fraction, *noise, *seed);
                const fs::path base = fs::path(*table).parent_path();
                const fs::path table_path =
                    out_table->empty() ? base / "corrupted.csv" : fs::path(*out_table);
                const fs::path plan_path =
                    out_plan->empty() ? base / "corruption_plan.json" : fs::path(*out_plan);
                save_table(result.table, table_path);
                std::ofstream plan_out(plan_path);
                plan_out << result.plan.to_json().dump(2) << '\n';
                std::cout << "wrote " << table_path.string() << " ("
                          << result.plan.masked_positions.size() << " masked cells, "
                          << result.plan.noise_columns.size() << " noise columns)\n";
            };
        });
    }

    // zoo init | add | list | search
    {
        auto* zoo_cmd = app.add_subcommand("zoo", "Model-card zoo maintenance");
        zoo_cmd->require_subcommand(1);
        zoo_cmd->fallthrough();
        auto dir = std::make_shared<std::string>("zoo");
        zoo_cmd->add_option("--dir", *dir, "Zoo directory");

        zoo_cmd->add_subcommand("init", "Write the built-in starter cards")
            ->callback([&action, dir] {
                action = [dir] {
                    auto gateway = offline_embed_gateway();
                    ModelZoo zoo;
                    populate_builtin_zoo(zoo, gateway);
                    zoo.save(*dir);
                    std::cout << "initialized zoo with " << zoo.size() << " cards at " << *dir
                              << "\n";
                };
            });

        auto card_file = std::make_shared<std::string>();
        auto* add = zoo_cmd->add_subcommand("add", "Add a model card from a JSON file");
        add->add_option("--card", *card_file, "Card JSON file")->required();
        add->callback([&action, dir, card_file] {
            action = [dir, card_file] {
                auto gateway = offline_embed_gateway();
                ModelZoo zoo;
                load_zoo_dir(zoo, gateway, *dir);
                std::ifstream in(*card_file);
                if (!in) throw std::runtime_error("cannot open card file: " + *card_file);
                const auto id =
                    zoo.add_card(gateway, ModelCard::from_json(nlohmann::json::parse(in)));
                zoo.save(*dir);
                std::cout << "added card " << id << "\n";
            };
        });

        zoo_cmd->add_subcommand("list", "List cards")->callback([&action, dir] {
            action = [dir] {
                auto gateway = offline_embed_gateway();
                ModelZoo zoo;
                load_zoo_dir(zoo, gateway, *dir);
                for (const auto& card : zoo.cards()) {
                    std::string mods;
                    for (Modality m : all_modalities())
                        if (card.modalities.count(m))
                            mods += std::string(mods.empty() ? "" : ",") + modality_tag(m);
                    std::cout << card.name << "  [" << mods << "]  dim=" << card.output_feature_dim
                              << "\n";
                }
            };
        });

        auto modality_arg = std::make_shared<std::string>();
        auto request = std::make_shared<std::string>();
        auto k = std::make_shared<std::size_t>(5);
        auto* search = zoo_cmd->add_subcommand("search", "Modality-filtered similarity search");
        search
            ->add_option("--modality", *modality_arg,
                         "numerical|categorical|text|image_path|video_path")
            ->required();
        search->add_option("--request", *request, "Free-text requirements")->required();
        search->add_option("-k,--top", *k, "Results to return");
        search->callback([&action, dir, modality_arg, request, k] {
            action = [dir, modality_arg, request, k] {
                auto gateway = offline_embed_gateway();
                ModelZoo zoo;
                load_zoo_dir(zoo, gateway, *dir);
                const auto ranked = zoo.retrieve_candidates(
                    gateway, modality_from_tag(*modality_arg), Directive{*request}, *k);
                for (const auto& r : ranked)
                    std::cout << r.card.name << "  similarity=" << r.similarity << "\n";
            };
        });
    }

    // stage commands over a run config
    const auto add_stage = [&app, &action](const std::string& name, const std::string& help,
                                           void (Orchestrator::*stage)()) {
        auto* cmd = app.add_subcommand(name, help);
        auto config_path = std::make_shared<std::string>();
        cmd->add_option("--config", *config_path, "Run configuration TOML")->required();
        cmd->callback([&action, config_path, stage] {
            action = [config_path, stage] {
                auto orchestrator = make_orchestrator(*config_path);
                (orchestrator.*stage)();
            };
        });
    };

    add_stage("infer-modalities", "Stage 1: column modality inference",
              &Orchestrator::infer_modalities);
    add_stage("engineer-features", "Stage 2: feature filtering and imputation",
              &Orchestrator::engineer_features);
    add_stage("select", "Stage 3: per-modality model selection", &Orchestrator::select);
    add_stage("assemble", "Stage 4: fusion pipeline assembly", &Orchestrator::assemble);
    add_stage("train", "Train the assembled pipeline (uses best.json when present)",
              &Orchestrator::train_model);
    add_stage("run", "Full pipeline: stages 1-5 plus training and the final report",
              &Orchestrator::run_all);

    {
        auto* cmd = app.add_subcommand("evaluate", "Evaluate the trained model on a split");
        auto config_path = std::make_shared<std::string>();
        auto split = std::make_shared<std::string>("val");
        cmd->add_option("--config", *config_path, "Run configuration TOML")->required();
        cmd->add_option("--split", *split, "val|train|all");
        cmd->callback([&action, config_path, split] {
            action = [config_path, split] {
                auto orchestrator = make_orchestrator(*config_path);
                orchestrator.evaluate_model(*split);
            };
        });
    }

    {
        auto* hpo_cmd = app.add_subcommand("hpo", "Hyperparameter optimization");
        hpo_cmd->require_subcommand(1);
        hpo_cmd->fallthrough();
        auto config_path = std::make_shared<std::string>();
        hpo_cmd->add_option("--config", *config_path, "Run configuration TOML")->required();
        hpo_cmd->add_subcommand("propose", "Describe hyperparameters and propose a search space")
            ->callback([&action, config_path] {
                action = [config_path] { make_orchestrator(*config_path).hpo_propose(); };
            });
        hpo_cmd->add_subcommand("run", "Execute the search over the proposed space")
            ->callback([&action, config_path] {
                action = [config_path] { make_orchestrator(*config_path).hpo_run(); };
            });
    }

    CLI11_PARSE(app, argc, argv);
    try {
        action();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
