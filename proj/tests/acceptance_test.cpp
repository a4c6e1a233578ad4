// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with its runtime. Everything runs offline; LLM-backed stages replay
// fixtures recorded in-process from the scripted endpoint.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "tablefuse/builtin_zoo.hpp"
#include "tablefuse/corruption.hpp"
#include "tablefuse/hpo.hpp"
#include "tablefuse/orchestrator.hpp"
#include "tablefuse/runtime/fusion_model.hpp"
#include "tablefuse/runtime/metrics.hpp"
#include "tablefuse/runtime/trainer.hpp"
#include "tablefuse/synthetic.hpp"

#include "support/instrumented_transport.hpp"
#include "support/pipeline_fixture.hpp"
#include "support/scripted_llm.hpp"
#include "support/temp_dir.hpp"

using namespace tablefuse;
using testsupport::InstrumentedTransport;
using testsupport::ScriptedLlm;
using testsupport::TempDir;

namespace {

class Criterion {
public:
    Criterion(int index, std::string name, double budget_seconds)
        : index_(index),
          name_(std::move(name)),
          budget_(budget_seconds),
          start_(std::chrono::steady_clock::now()) {}

    void expect(bool condition, const std::string& what) {
        if (!condition) failures_.push_back(what);
    }

    void finish() {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        expect(elapsed < budget_, "runtime " + std::to_string(elapsed) + "s exceeds budget " +
                                      std::to_string(budget_) + "s");
        const bool ok = failures_.empty();
        std::cout << "[criterion " << index_ << "] " << name_ << ": " << (ok ? "PASS" : "FAIL")
                  << " (" << std::fixed << std::setprecision(2) << elapsed << "s)\n";
        std::cout.unsetf(std::ios::fixed);
        for (const auto& f : failures_) std::cout << "    - " << f << "\n";
        CHECK(failures_.empty());
    }

private:
    int index_;
    std::string name_;
    double budget_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> failures_;
};

LlmGateway offline_gateway() {
    GatewayConfig cfg;
    cfg.mode = GatewayMode::replay;
    return LlmGateway(cfg, nullptr);
}

// Live gateway that serves canned replies in order, repeating the last one.
std::pair<std::shared_ptr<LlmGateway>, std::shared_ptr<InstrumentedTransport>> gateway_with(
    std::vector<std::string> replies) {
    auto index = std::make_shared<std::size_t>(0);
    auto canned = std::make_shared<std::vector<std::string>>(std::move(replies));
    auto transport = std::make_shared<InstrumentedTransport>(
        [index, canned](const std::string&, const std::string&) {
            const std::size_t i = std::min(*index, canned->size() - 1);
            ++(*index);
            return testsupport::chat_payload((*canned)[i]);
        });
    GatewayConfig cfg;
    cfg.mode = GatewayMode::live;
    return {std::make_shared<LlmGateway>(cfg, nullptr, transport), transport};
}

ModelCard make_card(const std::string& name, std::set<Modality> mods, const std::string& desc,
                    std::size_t dim) {
    ModelCard c;
    c.name = name;
    c.model_type = "t";
    c.modalities = std::move(mods);
    c.description = desc;
    c.performance_notes = "p";
    c.hardware_requirements = "h";
    c.output_feature_dim = dim;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

FusionSpec random_small_spec(tablefuse::detail::Rng& rng, bool regression) {
    FusionSpec spec;
    const std::size_t n = 1 + rng.bounded(3);
    for (std::size_t i = 0; i < n; ++i) {
        spec.branches.push_back({all_modalities()[i], "m" + std::to_string(i), 1 + rng.bounded(8), 0});
        spec.branch_weights.push_back(rng.real());
    }
    spec.fusion_weight = 0.25 + rng.real();
    spec.hidden_widths = {1 + rng.bounded(5), 1 + rng.bounded(4)};
    spec.output_dim = regression ? 1 : 2 + rng.bounded(2);
    spec.validate();
    return spec;
}

ModalityBatch random_small_batch(const FusionSpec& spec, std::size_t rows,
                                 tablefuse::detail::Rng& rng) {
    ModalityBatch batch;
    for (const auto& b : spec.branches) {
        Eigen::MatrixXd f(rows, b.feature_dim);
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = rng.normal();
        batch.branch_features.push_back(std::move(f));
    }
    batch.labels.resize(static_cast<Eigen::Index>(rows));
    for (Eigen::Index i = 0; i < batch.labels.size(); ++i)
        batch.labels[i] = spec.output_dim > 1 ? static_cast<double>(rng.bounded(spec.output_dim))
                                              : rng.normal();
    return batch;
}

// The 500-row dataset shared by criteria 6 and 7, with its fixture stores.
struct SharedDataset {
    TempDir dir{"acceptance_data"};
    SyntheticDataset ds = generate_synthetic_dataset(500, 7);
    SharedDataset() { write_dataset(ds, dir.path()); }
};

SharedDataset& shared_dataset() {
    static SharedDataset shared;
    return shared;
}

void record_full_run(const std::filesystem::path& data_dir, const std::string& csv_name,
                     const std::filesystem::path& out_dir, const std::filesystem::path& fixtures,
                     const ScriptedLlm::Script& script) {
    auto config = testsupport::synthetic_run_config(data_dir, out_dir, csv_name);
    config.gateway.mode = GatewayMode::record;
    config.fixture_path = fixtures;
    config.hpo.trials = 2;
    Orchestrator orchestrator(config, std::make_shared<ScriptedLlm>(script));
    orchestrator.run_all();
}

double replay_full_run(const std::filesystem::path& data_dir, const std::string& csv_name,
                       const std::filesystem::path& out_dir,
                       const std::filesystem::path& fixtures, nlohmann::json* report_out) {
    auto config = testsupport::synthetic_run_config(data_dir, out_dir, csv_name);
    config.gateway.mode = GatewayMode::replay;
    config.fixture_path = fixtures;
    config.hpo.trials = 2;
    Orchestrator orchestrator(config, nullptr);
    orchestrator.run_all();
    const auto report = nlohmann::json::parse(slurp(out_dir / "report.json"));
    if (report_out) *report_out = report;
    return report.at("final_metric").get<double>();
}

}  // namespace

TEST_CASE("criterion 1: fusion dimension law") {
    Criterion criterion(1, "fusion dimension law", 1.0);
    auto gateway = offline_gateway();

    {
        ModelZoo zoo;
        zoo.add_card(gateway, make_card("a", {Modality::text}, "a", 512));
        zoo.add_card(gateway, make_card("b", {Modality::image_path}, "b", 768));
        zoo.add_card(gateway, make_card("c", {Modality::numerical}, "c", 64));
        const auto spec = build_fusion_spec({{Modality::text, {"a", "r", {}}},
                                             {Modality::image_path, {"b", "r", {}}},
                                             {Modality::numerical, {"c", "r", {}}}},
                                            zoo, 2);
        criterion.expect(spec.max_dim() == 768, "D != 768 on the worked example");
        criterion.expect(spec.concat_dim() == 2304, "concat != 2304 on the worked example");
    }

    tablefuse::detail::Rng rng(20240601);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.bounded(4);
        ModelZoo zoo;
        std::map<Modality, SelectionResult> selections;
        std::size_t expect_max = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t dim = 1 + rng.bounded(1024);
            expect_max = std::max(expect_max, dim);
            const std::string name = "m" + std::to_string(trial) + "_" + std::to_string(i);
            zoo.add_card(gateway, make_card(name, {all_modalities()[i]}, name, dim));
            selections[all_modalities()[i]] = {name, "r", {name}};
        }
        const auto spec = build_fusion_spec(selections, zoo, 1 + rng.bounded(4));
        criterion.expect(spec.max_dim() == expect_max,
                         "adapter law broke at trial " + std::to_string(trial));
        criterion.expect(spec.concat_dim() == n * expect_max,
                         "concat law broke at trial " + std::to_string(trial));
        bool adapters_uniform = true;
        for (const auto& b : spec.to_json()["branches"])
            adapters_uniform = adapters_uniform && b["adapter_out"] == expect_max;
        criterion.expect(adapters_uniform,
                         "adapter widths not uniform at trial " + std::to_string(trial));
    }
    criterion.finish();
}

TEST_CASE("criterion 2: gradient check") {
    Criterion criterion(2, "gradient check vs central differences", 30.0);
    tablefuse::detail::Rng rng(424242);

    for (int instance = 0; instance < 50; ++instance) {
        const bool regression = instance % 4 == 3;
        const TaskKind task = regression ? TaskKind::regression : TaskKind::multiclass;
        const FusionSpec spec = random_small_spec(rng, regression);
        const ModalityBatch batch = random_small_batch(spec, 4 + rng.bounded(4), rng);
        FusionParams params = FusionParams::init(spec, rng.next());

        const auto out = forward(batch, spec, params);
        const Eigen::VectorXd analytic =
            backward(batch, out, batch.labels, spec, params, task).flatten();
        const Eigen::VectorXd theta = params.flatten();

        auto loss_at = [&](const Eigen::VectorXd& flat) {
            FusionParams p = params;
            p.load(flat);
            return total_loss(forward(batch, spec, p), batch.labels, spec, task);
        };

        const double eps = 1e-5;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            Eigen::VectorXd up = theta, down = theta;
            up[j] += eps;
            down[j] -= eps;
            const double numeric = (loss_at(up) - loss_at(down)) / (2 * eps);
            const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic[j])});
            worst = std::max(worst, std::abs(numeric - analytic[j]) / denom);
        }
        criterion.expect(worst < 1e-4, "instance " + std::to_string(instance) +
                                           " relative error " + std::to_string(worst));
    }
    criterion.finish();
}

TEST_CASE("criterion 3: retrieval oracle") {
    Criterion criterion(3, "retrieval equals brute-force sort on randomized zoos", 5.0);
    auto gateway = offline_gateway();
    tablefuse::detail::Rng rng(90210);
    const std::vector<std::string> vocab = {"swift", "deep",  "wide",  "tiny",  "fusion",
                                            "dense", "fast",  "prime", "broad", "narrow",
                                            "ZZXXQ", "QQYYZ", "plain", "rich",  "light"};

    for (int round = 0; round < 100; ++round) {
        const std::size_t n_cards = 5 + rng.bounded(46);
        ModelZoo zoo;
        std::vector<ModelCard> cards;
        for (std::size_t i = 0; i < n_cards; ++i) {
            std::set<Modality> mods = {all_modalities()[rng.bounded(3)]};
            if (rng.bounded(3) == 0) mods.insert(all_modalities()[rng.bounded(5)]);
            std::string desc;
            for (int w = 0; w < 3; ++w) desc += (w ? " " : "") + vocab[rng.bounded(vocab.size())];
            auto card = make_card("card_" + std::to_string(i), mods, desc, 8);
            cards.push_back(card);
            zoo.add_card(gateway, card);
        }
        const Modality modality = all_modalities()[rng.bounded(3)];
        std::string request;
        for (int w = 0; w < 3; ++w) request += (w ? " " : "") + vocab[rng.bounded(vocab.size())];

        std::vector<ModelCard> supported;
        for (const auto& c : cards)
            if (c.supports(modality)) supported.push_back(c);
        if (supported.empty()) continue;

        // Exhaustive oracle: score every supported card, full sort with the
        // similarity-descending, name-ascending order.
        const auto request_vec = gateway.embed(request);
        std::vector<std::pair<double, std::string>> oracle;
        for (const auto& c : supported) {
            const auto v = gateway.embed(render_card_text(c));
            double dot = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                dot += request_vec[i] * v[i];
                na += request_vec[i] * request_vec[i];
                nb += v[i] * v[i];
            }
            oracle.emplace_back(na > 0 && nb > 0 ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0,
                                c.name);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        if (oracle.size() > 5) oracle.resize(5);

        const auto got = zoo.retrieve_candidates(gateway, modality, Directive{request}, 5);
        bool match = got.size() == oracle.size();
        for (std::size_t i = 0; match && i < got.size(); ++i)
            match = got[i].card.name == oracle[i].second && got[i].similarity == oracle[i].first;
        criterion.expect(match, "ranking mismatch in round " + std::to_string(round));
    }
    criterion.finish();
}

TEST_CASE("criterion 4: prompt-contract suite") {
    Criterion criterion(4, "validators enforce every prompt rule", 10.0);

    StructuredTable table;
    table.columns = {"age", "species", "photo", "target"};
    table.label_column = "target";
    table.cells = {{"3", "finch", "a.jpg", "0"},
                   {"7", "gecko", "b.jpg", "1"},
                   {"9", "otter", "c.jpg", "1"}};
    ModalitySchema schema;
    schema.by_column = {{"age", Modality::numerical},
                        {"species", Modality::categorical},
                        {"photo", Modality::image_path},
                        {"target", Modality::categorical}};

    // Column coverage: compliant fixture passes, omission fails after retry.
    {
        auto [gw, tp] = gateway_with(
            {"{\"age\":\"numerical\",\"species\":\"categorical\",\"photo\":\"image path\","
             "\"target\":\"categorical\"}"});
        bool ok = true;
        try {
            infer_modalities(*gw, table, Directive{""});
        } catch (...) {
            ok = false;
        }
        criterion.expect(ok, "coverage: compliant fixture rejected");
    }
    {
        auto [gw, tp] = gateway_with(
            {"{\"age\":\"numerical\",\"species\":\"categorical\",\"photo\":\"image path\"}"});
        bool failed = false;
        std::string message;
        try {
            infer_modalities(*gw, table, Directive{""});
        } catch (const std::exception& e) {
            failed = true;
            message = e.what();
        }
        criterion.expect(failed && message.find("target") != std::string::npos,
                         "coverage: omission not reported");
        criterion.expect(tp->call_count() == 2, "coverage: corrective retry not issued");
    }

    // No forged features.
    {
        auto [gw, tp] = gateway_with({"[\"age\", \"species\", \"photo\"]"});
        bool ok = true;
        try {
            filter_features(*gw, table, schema, Directive{""});
        } catch (...) {
            ok = false;
        }
        criterion.expect(ok, "forgery: compliant fixture rejected");
    }
    {
        auto [gw, tp] = gateway_with({"[\"age\", \"bank_balance\"]"});
        bool failed = false;
        try {
            filter_features(*gw, table, schema, Directive{""});
        } catch (const std::exception& e) {
            failed = std::string(e.what()).find("bank_balance") != std::string::npos;
        }
        criterion.expect(failed, "forgery: forged feature accepted");
    }

    // Image features preserved.
    {
        auto [gw, tp] = gateway_with({"[\"age\", \"species\", \"photo\"]"});
        const auto result = filter_features(*gw, table, schema, Directive{""});
        criterion.expect(result.reinstated.empty(), "image preservation: false reinstatement");
    }
    {
        auto [gw, tp] = gateway_with({"[\"age\", \"species\"]"});
        const auto result = filter_features(*gw, table, schema, Directive{""});
        const bool kept = std::find(result.retained.begin(), result.retained.end(), "photo") !=
                          result.retained.end();
        criterion.expect(kept && result.reinstated == std::vector<std::string>{"photo"},
                         "image preservation: dropped image column not reinstated");
    }

    // "???" completeness: filled and unresolved exactly cover the gaps, and
    // no retained tabular cell stays masked without an unresolved entry.
    {
        StructuredTable gappy = table;
        gappy.cells[0][0] = kMissingMarker;
        gappy.cells[1][1] = kMissingMarker;
        FilterResult fr;
        fr.retained = {"age", "species", "photo"};
        const auto filtered = apply_filter(gappy, schema, fr);

        auto covers = [&](LlmGateway& gw) {
            ImputeOptions opts;
            opts.example_count = 1;
            const auto out = impute_table(gw, filtered, Directive{""}, opts);
            std::set<std::pair<std::size_t, std::string>> covered;
            for (const auto& e : out.report.filled) covered.insert({e.row, e.column});
            for (const auto& e : out.report.unresolved) covered.insert({e.row, e.column});
            if (covered !=
                std::set<std::pair<std::size_t, std::string>>{{0, "age"}, {1, "species"}})
                return false;
            for (std::size_t r = 0; r < out.table.row_count(); ++r)
                for (const auto& c : fr.retained)
                    if (out.table.at(r, c) == kMissingMarker &&
                        !std::count_if(out.report.unresolved.begin(), out.report.unresolved.end(),
                                       [&](const auto& u) { return u.row == r && u.column == c; }))
                        return false;
            return true;
        };

        auto [good_gw, t1] = gateway_with({"5"});  // fills age; invalid for species
        criterion.expect(covers(*good_gw), "imputation completeness (mixed outcome)");
        auto [bad_gw, t2] = gateway_with({"not even close"});
        criterion.expect(covers(*bad_gw), "imputation completeness (all unresolved)");
    }

    // Search-space rules, one passing and one failing fixture each.
    const nlohmann::json config = {{"learning_rate", 1e-4},
                                   {"batch_size", 32},
                                   {"epochs", 30},
                                   {"loss_weight", 1.0}};
    auto violations_of = [&config](const std::string& text) {
        return search_space_violations(HPOSpace::from_json(nlohmann::json::parse(text)), config);
    };
    criterion.expect(violations_of("{\"learning_rate\": \"[5e-5, 1e-4, 2e-4]\"}").empty(),
                     "hpo: compliant space rejected");
    criterion.expect(!violations_of("{\"learning_rate\": \"[5e-5,1e-4,2e-4]\", \"batch_size\": "
                                    "\"[16,32,64]\", \"epochs\": \"[20,30,40]\", \"loss_weight\": "
                                    "\"[0.5,1,2]\"}")
                          .empty(),
                     "hpo: more than 3 entries accepted");
    criterion.expect(!violations_of("{\"momentum\": \"[0.8, 0.9, 0.95]\"}").empty(),
                     "hpo: forged name accepted");
    criterion.expect(violations_of("{\"batch_size\": \"[16, 32, 64]\"}").empty(),
                     "hpo: 3-value numeric range rejected");
    criterion.expect(!violations_of("{\"batch_size\": \"[16, 32]\"}").empty(),
                     "hpo: 2-value numeric range accepted");
    criterion.expect(!violations_of("{\"learning_rate\": \"[2e-4, 3e-4, 4e-4]\"}").empty(),
                     "hpo: range missing the original value accepted");

    nlohmann::json ckpt_config = config;
    ckpt_config["checkpoint_name"] = "resnet50";
    criterion.expect(search_space_violations(HPOSpace::from_json(nlohmann::json::parse(
                                                 "{\"loss_weight\": \"[0.5, 1, 2]\"}")),
                                             ckpt_config)
                         .empty(),
                     "hpo: loss_weight-only space rejected under checkpoint_name");
    criterion.expect(!search_space_violations(HPOSpace::from_json(nlohmann::json::parse(
                                                  "{\"learning_rate\": \"[5e-5,1e-4,2e-4]\"}")),
                                              ckpt_config)
                          .empty(),
                     "hpo: non-loss_weight accepted under checkpoint_name");

    // Selection-name membership.
    const std::vector<ModelCard> candidates = {make_card("a", {Modality::text}, "a", 8),
                                               make_card("b", {Modality::text}, "b", 8)};
    {
        auto [gw, tp] = gateway_with({"{\"name\": \"a\", \"reason\": \"fine\"}"});
        criterion.expect(select_model(*gw, candidates, "d", Directive{"r"}).name == "a",
                         "membership: valid candidate rejected");
    }
    {
        auto [gw, tp] = gateway_with({"{\"name\": \"zeppelin\", \"reason\": \"vibes\"}"});
        bool failed = false;
        try {
            select_model(*gw, candidates, "d", Directive{"r"});
        } catch (...) {
            failed = true;
        }
        criterion.expect(failed, "membership: non-candidate accepted twice");
    }

    // Code-artifact token checks.
    {
        FusionSpec spec;
        spec.branches = {{Modality::text, "text_model", 512, 512},
                         {Modality::image_path, "image_model", 768, 768}};
        spec.branch_weights = {1, 1};
        spec.hidden_widths = {768};
        spec.output_dim = 2;
        const std::string good =
            "fusion_model fusion_head text_model image_model 768 "
            "{\"logits\": 1, \"features\": 2, \"weight\": 3}";
        bool all_pass = true;
        for (const auto& c : validate_code_artifact(good, spec)) all_pass = all_pass && c.passed;
        criterion.expect(all_pass, "codegen: complete artifact failed a check");

        const std::string bad =
            "fusion_model text_model image_model 768 "
            "{\"logits\": 1, \"features\": 2, \"weight\": 3}";
        bool head_failed = false, others_pass = true;
        for (const auto& c : validate_code_artifact(bad, spec)) {
            if (c.name == "mentions fusion_head")
                head_failed = !c.passed;
            else
                others_pass = others_pass && c.passed;
        }
        criterion.expect(head_failed && others_pass,
                         "codegen: missing token not isolated to its check");
    }
    criterion.finish();
}

TEST_CASE("criterion 5: search oracle") {
    Criterion criterion(5, "grid optimum, random determinism, singleton baseline", 120.0);

    TempDir tmp("acc5");
    const auto ds = generate_synthetic_dataset(80, 11);
    write_dataset(ds, tmp.path());
    ModalitySchema schema;
    schema.by_column = {{"age", Modality::numerical},
                        {"species", Modality::categorical},
                        {"notes", Modality::text},
                        {"photo", Modality::image_path},
                        {"adopted", Modality::categorical}};
    std::map<Modality, SelectionResult> selections = {
        {Modality::numerical, {"numerical_mlp", "r", {}}},
        {Modality::categorical, {"categorical_mlp", "r", {}}},
        {Modality::text, {"google/flan-t5-small", "r", {}}},
        {Modality::image_path, {"mobilenetv3_large_100", "r", {}}}};
    const auto plan = build_processor_plan(schema, selections, ds.table, TaskKind::multiclass);
    const auto split = make_split(ds.table.row_count(), 0.2, 11);
    FittedProcessors fitted;
    fitted.fit(plan, ds.table, split.train_rows, tmp.path());

    FusionSpec spec;
    for (Modality m :
         {Modality::numerical, Modality::categorical, Modality::text, Modality::image_path}) {
        spec.branches.push_back({m, "model", fitted.encoded_dim(m), fitted.encoded_dim(m)});
        spec.branch_weights.push_back(1.0);
    }
    spec.output_dim = fitted.class_count();
    spec.hidden_widths = {8, 8};
    spec.validate();

    std::vector<std::size_t> all_rows(ds.table.row_count());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;
    const ModalityBatch batch = fitted.encode_batch(ds.table, all_rows, spec);

    TrainConfig base;
    base.task = TaskKind::multiclass;
    base.learning_rate = 0.3;
    base.batch_size = 16;
    base.epochs = 12;
    base.seed = 11;

    const auto objective = [&](const TrainConfig& c) {
        return train(batch, split, spec, c).final_metric;
    };

    HPOSpace space;
    space.entries.emplace_back("learning_rate", parse_search_range(nlohmann::json("[0.15, 0.3]")));
    space.entries.emplace_back("loss_weight", parse_search_range(nlohmann::json("[0.5, 1, 2]")));
    SearchOptions grid_opts;
    grid_opts.strategy = SearchStrategy::grid;
    const auto grid = run_search(space, base, TaskKind::multiclass, objective, grid_opts);
    criterion.expect(grid.records.size() == 6, "grid did not enumerate 2x3 = 6 trials");
    double best = -1;
    for (const auto& r : grid.records) best = std::max(best, r.metric);
    criterion.expect(grid.best.metric == best, "grid best is not the exhaustive optimum");

    SearchOptions random_opts;
    random_opts.strategy = SearchStrategy::random;
    random_opts.trials = 4;
    random_opts.seed = 5;
    const auto r1 = run_search(space, base, TaskKind::multiclass, objective, random_opts);
    const auto r2 = run_search(space, base, TaskKind::multiclass, objective, random_opts);
    bool identical = r1.records.size() == r2.records.size();
    for (std::size_t i = 0; identical && i < r1.records.size(); ++i)
        identical = r1.records[i].assignment_json() == r2.records[i].assignment_json() &&
                    r1.records[i].metric == r2.records[i].metric;
    criterion.expect(identical, "random search not seed-deterministic");

    const double baseline = objective(base);
    HPOSpace singleton;
    singleton.entries.emplace_back("learning_rate",
                                   parse_search_range(nlohmann::json::parse("[0.3]")));
    const auto single = run_search(singleton, base, TaskKind::multiclass, objective, grid_opts);
    criterion.expect(single.best.metric == baseline,
                     "singleton space did not reproduce the baseline metric bit-exactly");
    criterion.finish();
}

TEST_CASE("criterion 6: end-to-end replay run") {
    Criterion criterion(6, "full replay pipeline on the 500-row dataset", 120.0);
    auto& shared = shared_dataset();

    const auto fixtures = shared.dir / "run.fixtures.json";
    {
        TempDir record_out("acc6_record");
        record_full_run(shared.dir.path(), "table.csv", record_out.path(), fixtures,
                        testsupport::synthetic_script(shared.ds));
    }

    TempDir out_a("acc6_a");
    TempDir out_b("acc6_b");
    nlohmann::json report;
    double acc_a = 0;
    bool ran = true;
    try {
        acc_a = replay_full_run(shared.dir.path(), "table.csv", out_a.path(), fixtures, &report);
        replay_full_run(shared.dir.path(), "table.csv", out_b.path(), fixtures, nullptr);
    } catch (const std::exception& e) {
        ran = false;
        criterion.expect(false, std::string("replay run failed: ") + e.what());
    }
    if (ran) {
        criterion.expect(acc_a >= 0.9, "final accuracy " + std::to_string(acc_a) + " below 0.9");
        criterion.expect(slurp(out_a / "report.json") == slurp(out_b / "report.json"),
                         "two replay runs differ");
        criterion.expect(report.at("metric_name") == "accuracy", "metric is not accuracy");

        // Attainability oracle: logistic regression over age and species.
        const auto& table = shared.ds.table;
        const auto split = make_split(table.row_count(), 0.2, 7);
        Eigen::MatrixXd x(table.row_count(), 4);
        Eigen::VectorXd y(table.row_count());
        const std::vector<std::string> levels = {"finch", "gecko", "otter"};
        for (std::size_t r = 0; r < table.row_count(); ++r) {
            const auto i = static_cast<Eigen::Index>(r);
            x(i, 0) = std::stod(table.at(r, "age"));
            for (std::size_t l = 0; l < 3; ++l)
                x(i, 1 + static_cast<Eigen::Index>(l)) =
                    table.at(r, "species") == levels[l] ? 1.0 : 0.0;
            y[i] = std::stod(table.at(r, "adopted"));
        }
        const double mean = x.col(0).mean();
        const double sd = std::sqrt((x.col(0).array() - mean).square().mean());
        x.col(0) = (x.col(0).array() - mean) / sd;

        Eigen::MatrixXd xtr(split.train_rows.size(), 4);
        Eigen::VectorXd ytr(split.train_rows.size());
        for (std::size_t r = 0; r < split.train_rows.size(); ++r) {
            xtr.row(static_cast<Eigen::Index>(r)) =
                x.row(static_cast<Eigen::Index>(split.train_rows[r]));
            ytr[static_cast<Eigen::Index>(r)] = y[static_cast<Eigen::Index>(split.train_rows[r])];
        }
        Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
        double b = 0;
        for (int it = 0; it < 500; ++it) {
            const Eigen::VectorXd p = (1.0 / (1.0 + (-(xtr * w).array() - b).exp())).matrix();
            const Eigen::VectorXd err = p - ytr;
            w -= 0.5 * (xtr.transpose() * err) / static_cast<double>(xtr.rows());
            b -= 0.5 * err.mean();
        }
        std::size_t hits = 0;
        for (std::size_t r : split.val_rows) {
            const auto i = static_cast<Eigen::Index>(r);
            if ((x.row(i).dot(w) + b > 0 ? 1 : 0) == static_cast<int>(y[i])) ++hits;
        }
        const double oracle =
            static_cast<double>(hits) / static_cast<double>(split.val_rows.size());
        criterion.expect(oracle >= 0.9,
                         "logistic-regression oracle only reached " + std::to_string(oracle));
    }
    criterion.finish();
}

TEST_CASE("criterion 7: noise-robustness analogue") {
    Criterion criterion(7, "feature engineering recovers corrupted data", 240.0);
    auto& shared = shared_dataset();

    const auto clean_fixtures = shared.dir / "run.fixtures.json";
    if (!std::filesystem::exists(clean_fixtures)) {
        TempDir record_out("acc7_record_clean");
        record_full_run(shared.dir.path(), "table.csv", record_out.path(), clean_fixtures,
                        testsupport::synthetic_script(shared.ds));
    }
    TempDir clean_out("acc7_clean");
    const double clean_acc =
        replay_full_run(shared.dir.path(), "table.csv", clean_out.path(), clean_fixtures, nullptr);

    // Mask 20% of eligible cells, append 3 noise columns.
    const auto corrupted = corrupt(shared.ds.table, 0.2, 3, 99);
    save_table(corrupted.table, shared.dir / "corrupted.csv");
    criterion.expect(corrupted.plan.noise_columns.size() == 3, "corruption added != 3 noise columns");
    criterion.expect(!corrupted.plan.masked_positions.empty(), "corruption masked nothing");

    // AFE run: fixtures filter the noise columns and impute plausible values.
    const auto afe_fixtures = shared.dir / "afe.fixtures.json";
    {
        TempDir record_out("acc7_record_afe");
        record_full_run(shared.dir.path(), "corrupted.csv", record_out.path(), afe_fixtures,
                        testsupport::synthetic_script(shared.ds));
    }
    TempDir afe_out("acc7_afe");
    const double afe_acc =
        replay_full_run(shared.dir.path(), "corrupted.csv", afe_out.path(), afe_fixtures, nullptr);

    // Control run: keeps the noise and leaves the gaps unresolved.
    const auto control_fixtures = shared.dir / "control.fixtures.json";
    {
        TempDir record_out("acc7_record_control");
        record_full_run(shared.dir.path(), "corrupted.csv", record_out.path(), control_fixtures,
                        testsupport::passthrough_script());
    }
    TempDir control_out("acc7_control");
    const double control_acc = replay_full_run(shared.dir.path(), "corrupted.csv",
                                               control_out.path(), control_fixtures, nullptr);

    std::cout << "    clean=" << clean_acc << " afe=" << afe_acc << " control=" << control_acc
              << "\n";
    criterion.expect(std::abs(afe_acc - clean_acc) <= 0.02,
                     "afe accuracy " + std::to_string(afe_acc) + " not within 0.02 of clean " +
                         std::to_string(clean_acc));
    criterion.expect(control_acc < afe_acc, "control accuracy " + std::to_string(control_acc) +
                                                " not strictly below afe " +
                                                std::to_string(afe_acc));
    criterion.finish();
}

TEST_CASE("criterion 8: metric correctness") {
    Criterion criterion(8, "rank-statistic AUC equals pair counting", 30.0);
    tablefuse::detail::Rng rng(777);

    for (int round = 0; round < 100; ++round) {
        const std::size_t n = 10 + rng.bounded(191);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false, neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.bounded(4) == 0 ? std::floor(rng.real() * 6.0) / 6.0 : rng.real();
            labels[i] = rng.bounded(2) ? 1 : 0;
            (labels[i] ? pos : neg) = true;
        }
        if (!pos || !neg) {
            labels[0] = 1;
            labels[1] = 0;
        }
        double wins = 0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] != 1) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j] != 0) continue;
                ++pairs;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        }
        const double oracle = wins / static_cast<double>(pairs);
        if (std::abs(auc_rank(scores, labels) - oracle) >= 1e-12)
            criterion.expect(false, "auc mismatch in round " + std::to_string(round));
    }

    criterion.expect(accuracy({1, 2, 0}, {1, 2, 0}) == 1.0, "perfect accuracy != 1");
    criterion.expect(rmse({0.5, 1.5, -2.0}, {0.5, 1.5, -2.0}) == 0.0, "identical rmse != 0");
    criterion.finish();
}

TEST_CASE("criterion 9: robustness fixture set") {
    Criterion criterion(9, "ten paraphrased directives select the same models", 5.0);

    const std::vector<std::string> paraphrases = {
        "I hope to see the model efficiently running on mobile devices, optimizing for "
        "lightweight performance.",
        "The model's deployment on CPU devices, especially on lightweight and mobile platforms, "
        "is my preference.",
        "My goal is to have the model effectively deployed on CPU devices, with a focus on "
        "mobile and lightweight configurations.",
        "It would be great to have the model running seamlessly on various CPU devices, "
        "prioritizing mobility and lightweight hardware.",
        "I'm aiming for the model to be deployed on specific CPU hardware, emphasizing mobility "
        "and lightweight characteristics.",
        "Optimizing the model for mobile platforms and ensuring efficient operation on CPU "
        "devices aligns with my preferences.",
        "The deployment of the model on CPU devices, particularly on lightweight and mobile "
        "configurations, is my desired outcome.",
        "I'm specifically interested in the model's deployment on CPU devices, emphasizing "
        "efficiency and suitability for mobile platforms.",
        "My preference is for the model to be tailored for deployment on CPU devices, with a "
        "keen focus on mobile and lightweight capabilities.",
        "Ensuring the model's inference speed on CPU devices, especially in mobile and "
        "lightweight scenarios, is my priority.",
    };

    StructuredTable table;
    table.columns = {"age", "species", "notes", "photo", "adopted"};
    table.label_column = "adopted";
    table.cells = {{"3", "finch", "sings", "a.jpg", "0"}, {"9", "otter", "swims", "b.jpg", "1"}};
    ModalitySchema schema;
    schema.by_column = {{"age", Modality::numerical},
                        {"species", Modality::categorical},
                        {"notes", Modality::text},
                        {"photo", Modality::image_path},
                        {"adopted", Modality::categorical}};

    // Record the forty selection conversations, then replay them all offline.
    TempDir tmp("acc9");
    const auto fixture_path = tmp / "robustness.fixtures.json";
    {
        ScriptedLlm::Script script;
        script.model_preference = {"google/flan-t5-small", "mobilenetv3_large_100",
                                   "categorical_mlp", "numerical_mlp"};
        auto transport = std::make_shared<ScriptedLlm>(script);
        GatewayConfig cfg;
        cfg.mode = GatewayMode::record;
        auto fixtures = std::make_shared<FixtureStore>();
        fixtures->set_write_through(fixture_path);
        LlmGateway gateway(cfg, fixtures, transport);
        ModelZoo zoo;
        populate_builtin_zoo(zoo, gateway);
        const std::string desc = build_data_description(schema, table, TaskKind::multiclass);
        for (const auto& p : paraphrases)
            select_per_modality(gateway, zoo, schema, table, desc, Directive{p});
    }

    GatewayConfig cfg;
    cfg.mode = GatewayMode::replay;
    LlmGateway gateway(cfg, FixtureStore::load(fixture_path), nullptr);
    ModelZoo zoo;
    populate_builtin_zoo(zoo, gateway);
    const std::string desc = build_data_description(schema, table, TaskKind::multiclass);

    std::map<Modality, std::string> first;
    bool all_identical = true;
    for (const auto& p : paraphrases) {
        const auto selections =
            select_per_modality(gateway, zoo, schema, table, desc, Directive{p});
        if (first.empty()) {
            for (const auto& [m, r] : selections) first[m] = r.name;
        } else {
            for (const auto& [m, r] : selections)
                if (first.at(m) != r.name) all_identical = false;
        }
    }
    criterion.expect(all_identical, "paraphrases produced different selection maps");
    criterion.expect(first.at(Modality::text) == "google/flan-t5-small",
                     "text selection is not the lightweight model");
    criterion.expect(first.at(Modality::image_path) == "mobilenetv3_large_100",
                     "image selection is not the lightweight model");
    criterion.expect(first.at(Modality::categorical) == "categorical_mlp",
                     "categorical selection is not the mlp");
    criterion.expect(first.at(Modality::numerical) == "numerical_mlp",
                     "numerical selection is not the mlp");
    criterion.finish();
}
