#include <catch2/catch_amalgamated.hpp>

#include "tablefuse/runtime/fusion_model.hpp"
#include "tablefuse/runtime/metrics.hpp"
#include "tablefuse/runtime/processors.hpp"
#include "tablefuse/runtime/trainer.hpp"
#include "tablefuse/synthetic.hpp"

#include "support/temp_dir.hpp"

using namespace tablefuse;
using testsupport::TempDir;

namespace {

FusionSpec toy_spec(std::vector<std::size_t> dims, std::size_t output_dim,
                    std::vector<std::size_t> hidden = {4, 3}) {
    FusionSpec spec;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        spec.branches.push_back({all_modalities()[i], "m" + std::to_string(i), dims[i], dims[i]});
        spec.branch_weights.push_back(1.0);
    }
    spec.hidden_widths = std::move(hidden);
    spec.output_dim = output_dim;
    spec.validate();
    return spec;
}

ModalityBatch random_batch(const FusionSpec& spec, std::size_t rows, std::uint64_t seed) {
    tablefuse::detail::Rng rng(seed);
    ModalityBatch batch;
    for (const auto& b : spec.branches) {
        Eigen::MatrixXd f(rows, b.feature_dim);
        for (Eigen::Index i = 0; i < f.rows(); ++i)
            for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = rng.normal();
        batch.branch_features.push_back(std::move(f));
    }
    batch.labels.resize(static_cast<Eigen::Index>(rows));
    for (Eigen::Index i = 0; i < batch.labels.size(); ++i)
        batch.labels[i] = spec.output_dim > 1
                              ? static_cast<double>(rng.bounded(spec.output_dim))
                              : rng.normal();
    return batch;
}

// Fitted processors over the synthetic dataset with a spec whose dims match
// the fitted widths.
struct RuntimeFixture {
    SyntheticDataset ds;
    ProcessorPlan plan;
    FittedProcessors fitted;
    FusionSpec spec;
    SplitIndices split;

    RuntimeFixture(std::size_t rows, std::uint64_t seed, const TempDir& tmp,
                   TaskKind task = TaskKind::multiclass)
        : ds(generate_synthetic_dataset(rows, seed)) {
        write_sidecar_files(ds, tmp.path());
        ModalitySchema schema;
        schema.by_column = {{"age", Modality::numerical},
                            {"species", Modality::categorical},
                            {"notes", Modality::text},
                            {"photo", Modality::image_path},
                            {"adopted", Modality::categorical}};
        std::map<Modality, SelectionResult> selections = {
            {Modality::numerical, {"numerical_mlp", "r", {"numerical_mlp"}}},
            {Modality::categorical, {"categorical_mlp", "r", {"categorical_mlp"}}},
            {Modality::text, {"google/flan-t5-small", "r", {"google/flan-t5-small"}}},
            {Modality::image_path, {"mobilenetv3_large_100", "r", {"mobilenetv3_large_100"}}}};
        plan = build_processor_plan(schema, selections, ds.table, task);
        split = make_split(ds.table.row_count(), 0.2, seed);
        fitted.fit(plan, ds.table, split.train_rows, tmp.path());

        for (Modality m : {Modality::numerical, Modality::categorical, Modality::text,
                           Modality::image_path}) {
            spec.branches.push_back(
                {m, "model", fitted.encoded_dim(m), fitted.encoded_dim(m)});
            spec.branch_weights.push_back(1.0);
        }
        spec.output_dim = task == TaskKind::regression ? 1 : fitted.class_count();
        spec.hidden_widths = {8, 8};
        spec.validate();
    }

    std::vector<std::size_t> all_rows() const {
        std::vector<std::size_t> rows(ds.table.row_count());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        return rows;
    }
};

}  // namespace

TEST_CASE("one-hot encoding has the level width and a single one") {
    StructuredTable t;
    t.columns = {"level", "y"};
    t.label_column = "y";
    t.cells = {{"1", "0"}, {"2", "1"}, {"3", "0"}, {"2", "1"}};
    ModalitySchema schema;
    schema.by_column = {{"level", Modality::categorical}, {"y", Modality::categorical}};
    const auto plan = build_processor_plan(
        schema, {{Modality::categorical, {"categorical_mlp", "r", {}}}}, t, TaskKind::binary);

    FittedProcessors fitted;
    fitted.fit(plan, t, {0, 1, 2, 3}, ".");
    REQUIRE(fitted.encoded_dim(Modality::categorical) == 3);

    const auto enc = fitted.encode_modality(Modality::categorical, t, {1});
    REQUIRE(enc.cols() == 3);
    CHECK(enc.row(0).sum() == 1.0);
    CHECK(enc(0, 1) == 1.0);  // "2" is the second observed level

    // Unknown level at inference encodes as the zero vector, no error.
    StructuredTable unseen = t;
    unseen.cells[0][0] = "9";
    const auto zero = fitted.encode_modality(Modality::categorical, unseen, {0});
    CHECK(zero.row(0).sum() == 0.0);
}

TEST_CASE("standardized numerical columns have zero mean and unit variance on train rows") {
    TempDir tmp("std");
    RuntimeFixture fx(200, 17, tmp);

    const auto enc = fx.fitted.encode_modality(Modality::numerical, fx.ds.table, fx.split.train_rows);
    const double mean = enc.col(0).mean();
    const double var = (enc.col(0).array() - mean).square().sum() / enc.rows();
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);

    // Missing cells encode as the train mean (zero after standardization).
    StructuredTable masked = fx.ds.table;
    masked.cells[0][0] = kMissingMarker;
    const auto enc_masked = fx.fitted.encode_modality(Modality::numerical, masked, {0});
    CHECK(enc_masked(0, 0) == 0.0);
}

TEST_CASE("missing sidecar files are reported by name") {
    TempDir tmp("sidecar_missing");
    RuntimeFixture fx(12, 3, tmp);
    StructuredTable broken = fx.ds.table;
    broken.cells[0][3] = "img_absent.vec";
    REQUIRE_THROWS_WITH(fx.fitted.encode_modality(Modality::image_path, broken, {0}),
                        Catch::Matchers::ContainsSubstring("img_absent.vec"));
}

TEST_CASE("text hashing is unit-norm per populated column block") {
    TempDir tmp("text");
    RuntimeFixture fx(30, 5, tmp);
    const auto enc = fx.fitted.encode_modality(Modality::text, fx.ds.table, {0, 1, 2});
    for (Eigen::Index r = 0; r < enc.rows(); ++r)
        CHECK(std::abs(enc.row(r).norm() - 1.0) < 1e-9);
}

TEST_CASE("forward produces the shapes of the fusion equations") {
    SECTION("three branches at the worked-example dims") {
        const auto spec = toy_spec({512, 768, 64}, 2, {16});
        const auto batch = random_batch(spec, 4, 1);
        const auto params = FusionParams::init(spec, 2);
        const auto out = forward(batch, spec, params);
        CHECK(out.fused_features.rows() == 4);
        CHECK(out.fused_features.cols() == 2304);
        for (const auto& f : out.branch_features) CHECK(f.cols() == 768);
        CHECK(out.fused_logits.cols() == 2);
    }
    SECTION("single branch concat equals the branch features") {
        const auto spec = toy_spec({5}, 2, {4});
        const auto batch = random_batch(spec, 3, 7);
        const auto params = FusionParams::init(spec, 9);
        const auto out = forward(batch, spec, params);
        CHECK(out.fused_features.isApprox(out.branch_features[0]));
    }
    SECTION("zero parameters give zero logits") {
        const auto spec = toy_spec({3, 4}, 2, {5});
        const auto batch = random_batch(spec, 6, 11);
        const auto params = FusionParams::zeros_like(FusionParams::init(spec, 1));
        const auto out = forward(batch, spec, params);
        CHECK(out.fused_logits.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("mismatched branch width names the branch") {
        const auto spec = toy_spec({3, 4}, 2);
        auto batch = random_batch(spec, 2, 1);
        batch.branch_features[1].conservativeResize(2, 9);
        REQUIRE_THROWS_WITH(forward(batch, spec, FusionParams::init(spec, 1)),
                            Catch::Matchers::ContainsSubstring("categorical"));
    }
}

TEST_CASE("shape laws hold across a randomized sweep") {
    tablefuse::detail::Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 1 + rng.bounded(4);
        std::vector<std::size_t> dims;
        for (std::size_t i = 0; i < n; ++i) dims.push_back(1 + rng.bounded(12));
        const std::size_t C = 1 + rng.bounded(4);
        const auto spec = toy_spec(dims, C, {1 + rng.bounded(8)});
        const std::size_t B = 1 + rng.bounded(6);
        const auto batch = random_batch(spec, B, rng.next());
        const auto out = forward(batch, spec, FusionParams::init(spec, rng.next()));
        REQUIRE(out.fused_features.cols() ==
                static_cast<Eigen::Index>(n * spec.max_dim()));
        REQUIRE(out.fused_logits.rows() == static_cast<Eigen::Index>(B));
        REQUIRE(out.branch_logits.size() == n);
    }
}

TEST_CASE("loss respects weights and closed forms") {
    const auto spec = toy_spec({3, 4}, 3, {5});
    const auto batch = random_batch(spec, 8, 21);
    const auto params = FusionParams::init(spec, 5);
    const auto out = forward(batch, spec, params);

    SECTION("branch weights zero leaves the fusion-only loss") {
        FusionSpec fusion_only = spec;
        fusion_only.branch_weights = {0.0, 0.0};
        const double expected =
            tablefuse::detail::cross_entropy(out.fused_logits, batch.labels);
        CHECK(total_loss(out, batch.labels, fusion_only, TaskKind::multiclass) ==
              Catch::Approx(expected).epsilon(1e-12));
    }
    SECTION("doubling all weights doubles the loss") {
        FusionSpec doubled = spec;
        doubled.fusion_weight = 2.0;
        doubled.branch_weights = {2.0, 2.0};
        CHECK(total_loss(out, batch.labels, doubled, TaskKind::multiclass) ==
              Catch::Approx(2.0 * total_loss(out, batch.labels, spec, TaskKind::multiclass))
                  .epsilon(1e-12));
    }
    SECTION("uniform logits cost ln C") {
        const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(4, 3);
        Eigen::VectorXd labels(4);
        labels << 0, 1, 2, 1;
        CHECK(tablefuse::detail::cross_entropy(logits, labels) ==
              Catch::Approx(std::log(3.0)).margin(1e-9));
    }
    SECTION("one-hot weight on branch k isolates that branch's loss") {
        for (std::size_t k = 0; k < 2; ++k) {
            FusionSpec solo = spec;
            solo.fusion_weight = 0.0;
            solo.branch_weights = {0.0, 0.0};
            solo.branch_weights[k] = 1.0;
            const double expected =
                tablefuse::detail::cross_entropy(out.branch_logits[k], batch.labels);
            CHECK(total_loss(out, batch.labels, solo, TaskKind::multiclass) ==
                  Catch::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    tablefuse::detail::Rng rng(2024);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t n = 1 + rng.bounded(3);
        std::vector<std::size_t> dims;
        for (std::size_t i = 0; i < n; ++i) dims.push_back(1 + rng.bounded(8));
        const bool regression = trial % 3 == 2;
        const std::size_t C = regression ? 1 : 2 + rng.bounded(2);
        auto spec = toy_spec(dims, C, {1 + rng.bounded(5), 1 + rng.bounded(4)});
        spec.fusion_weight = 0.5 + rng.real();
        for (auto& w : spec.branch_weights) w = rng.real();
        const TaskKind task = regression ? TaskKind::regression : TaskKind::multiclass;

        const auto batch = random_batch(spec, 5, rng.next());
        FusionParams params = FusionParams::init(spec, rng.next());

        const auto out = forward(batch, spec, params);
        const FusionParams analytic = backward(batch, out, batch.labels, spec, params, task);
        const Eigen::VectorXd analytic_flat = analytic.flatten();

        auto loss_at = [&](const Eigen::VectorXd& flat) {
            FusionParams p = params;
            p.load(flat);
            return total_loss(forward(batch, spec, p), batch.labels, spec, task);
        };

        const Eigen::VectorXd theta = params.flatten();
        const double eps = 1e-5;
        for (Eigen::Index j = 0; j < theta.size(); j += 1 + theta.size() / 60) {
            Eigen::VectorXd up = theta, down = theta;
            up[j] += eps;
            down[j] -= eps;
            const double numeric = (loss_at(up) - loss_at(down)) / (2 * eps);
            const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic_flat[j])});
            REQUIRE(std::abs(numeric - analytic_flat[j]) / denom < 1e-4);
        }
    }
}

TEST_CASE("accuracy and rmse identities") {
    CHECK(accuracy({1, 0, 2}, {1, 0, 2}) == 1.0);
    CHECK(accuracy({1, 0, 0}, {1, 0, 2}) == Catch::Approx(2.0 / 3.0));
    CHECK(rmse({1.5, 2.5}, {1.5, 2.5}) == 0.0);
    CHECK(rmse({1.0, 3.0}, {0.0, 0.0}) == Catch::Approx(std::sqrt(5.0)));
}

TEST_CASE("rank-statistic AUC equals all-pairs counting with ties") {
    tablefuse::detail::Rng rng(818);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + rng.bounded(180);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // Coarse quantization forces plenty of ties.
            scores[i] = std::floor(rng.real() * 8.0) / 8.0;
            labels[i] = rng.bounded(2) ? 1 : 0;
            (labels[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;

        double wins = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] != 1) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[j] != 0) continue;
                ++pairs;
                if (scores[i] > scores[j]) wins += 1.0;
                else if (scores[i] == scores[j]) wins += 0.5;
            }
        }
        const double oracle = wins / static_cast<double>(pairs);
        REQUIRE(std::abs(auc_rank(scores, labels) - oracle) < 1e-12);
    }

    REQUIRE_THROWS_WITH(auc_rank({0.5, 0.7}, {1, 1}), Catch::Matchers::ContainsSubstring("single class"));
}

TEST_CASE("splits are deterministic, disjoint and covering") {
    const auto a = make_split(100, 0.2, 9);
    const auto b = make_split(100, 0.2, 9);
    REQUIRE(a.train_rows == b.train_rows);
    REQUIRE(a.val_rows == b.val_rows);
    CHECK(a.val_rows.size() == 20);
    std::set<std::size_t> all(a.train_rows.begin(), a.train_rows.end());
    for (auto r : a.val_rows) REQUIRE(all.insert(r).second);
    CHECK(all.size() == 100);
    CHECK(make_split(100, 0.2, 10).train_rows != a.train_rows);
}

TEST_CASE("training is deterministic and learns the separable synthetic task") {
    TempDir tmp("train");
    RuntimeFixture fx(300, 7, tmp);
    const auto batch = fx.fitted.encode_batch(fx.ds.table, fx.all_rows(), fx.spec);

    TrainConfig config;
    config.task = TaskKind::multiclass;
    config.learning_rate = 0.3;
    config.batch_size = 32;
    config.epochs = 40;
    config.seed = 7;

    const auto run1 = train(batch, fx.split, fx.spec, config);
    const auto run2 = train(batch, fx.split, fx.spec, config);
    REQUIRE(run1.final_metric == run2.final_metric);  // bitwise determinism
    REQUIRE(run1.history.size() == 40);

    // Independent attainability oracle: logistic regression on the numerical
    // and categorical blocks alone reaches 0.9 on the validation rows.
    {
        const auto x_num = fx.fitted.encode_modality(Modality::numerical, fx.ds.table, fx.all_rows());
        const auto x_cat = fx.fitted.encode_modality(Modality::categorical, fx.ds.table, fx.all_rows());
        Eigen::MatrixXd X(x_num.rows(), x_num.cols() + x_cat.cols());
        X << x_num, x_cat;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
        double b = 0;
        const auto& y = batch.labels;
        Eigen::MatrixXd Xtr(fx.split.train_rows.size(), X.cols());
        Eigen::VectorXd ytr(fx.split.train_rows.size());
        for (std::size_t i = 0; i < fx.split.train_rows.size(); ++i) {
            Xtr.row(i) = X.row(static_cast<Eigen::Index>(fx.split.train_rows[i]));
            ytr[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(fx.split.train_rows[i])];
        }
        for (int it = 0; it < 400; ++it) {
            Eigen::VectorXd p = (1.0 / (1.0 + (-(Xtr * w).array() - b).exp())).matrix();
            Eigen::VectorXd err = p - ytr;
            w -= 0.5 * (Xtr.transpose() * err) / static_cast<double>(Xtr.rows());
            b -= 0.5 * err.mean();
        }
        std::size_t hits = 0;
        for (std::size_t r : fx.split.val_rows) {
            const double score = X.row(static_cast<Eigen::Index>(r)).dot(w) + b;
            if ((score > 0 ? 1 : 0) == static_cast<int>(y[static_cast<Eigen::Index>(r)])) ++hits;
        }
        const double oracle_acc = static_cast<double>(hits) / fx.split.val_rows.size();
        REQUIRE(oracle_acc >= 0.9);
    }

    CHECK(run1.final_metric >= 0.9);
}

TEST_CASE("zero epochs returns initialized params and empty history") {
    TempDir tmp("zeroep");
    RuntimeFixture fx(40, 3, tmp);
    const auto batch = fx.fitted.encode_batch(fx.ds.table, fx.all_rows(), fx.spec);
    TrainConfig config;
    config.task = TaskKind::multiclass;
    config.epochs = 0;
    config.seed = 3;
    const auto outcome = train(batch, fx.split, fx.spec, config);
    CHECK(outcome.history.empty());
    CHECK(outcome.params.flatten() == FusionParams::init(outcome.spec, 3).flatten());
}

TEST_CASE("train config overlays map hyperparameters onto fields") {
    TrainConfig config;
    config.overlay("learning_rate", nlohmann::json("0.05"));
    CHECK(config.learning_rate == 0.05);
    config.overlay("batch_size", nlohmann::json(16));
    CHECK(config.batch_size == 16);
    config.overlay("loss_weight", nlohmann::json(0.5));
    REQUIRE(config.branch_loss_weight == 0.5);
    REQUIRE_THROWS(config.overlay("momentum", nlohmann::json(0.9)));

    const auto flat = config.flat();
    CHECK(flat.at("loss_weight") == 0.5);
    CHECK(flat.at("learning_rate") == 0.05);

    FusionSpec spec = toy_spec({3, 4, 5}, 2);
    config.hidden_width = 6;
    const auto adjusted = spec_for_training(spec, config);
    CHECK(adjusted.hidden_widths == std::vector<std::size_t>{6, 6});
    CHECK(adjusted.branch_weights == std::vector<double>{0.5, 0.5, 0.5});
}

TEST_CASE("binary AUC evaluation and retrieval scoring work end to end") {
    const auto spec = toy_spec({4, 4}, 2, {4});
    const auto params = FusionParams::init(spec, 77);
    auto batch = random_batch(spec, 50, 5);
    for (Eigen::Index i = 0; i < batch.labels.size(); ++i) batch.labels[i] = i % 2;

    const double auc = evaluate(params, batch, spec, TaskKind::binary);
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);

    const double pair_auc = evaluate(params, batch, spec, TaskKind::retrieval_pairs);
    CHECK(pair_auc >= 0.0);
    CHECK(pair_auc <= 1.0);

    const auto odd = toy_spec({4, 4, 4}, 2, {4});
    auto odd_batch = random_batch(odd, 10, 5);
    for (Eigen::Index i = 0; i < odd_batch.labels.size(); ++i) odd_batch.labels[i] = i % 2;
    REQUIRE_THROWS(evaluate(FusionParams::init(odd, 1), odd_batch, odd, TaskKind::retrieval_pairs));
}

TEST_CASE("history CSV carries one row per epoch") {
    TempDir tmp("hist");
    std::vector<EpochStats> history = {{0, 1.0, 1.1, 0.5}, {1, 0.8, 0.9, 0.7}};
    write_history_csv(history, tmp / "history.csv");
    std::ifstream in(tmp / "history.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,val_loss,metric");
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}
