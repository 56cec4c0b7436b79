#include <gtest/gtest.h>

#include <sstream>

#include "toposeg/checkpoint.hpp"
#include "toposeg/config.hpp"
#include "toposeg/error.hpp"
#include "toposeg/trainer.hpp"

namespace toposeg {
namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.lr_min = 1e-4;
  cfg.steps = 6;
  cfg.batch = 2;
  cfg.seeds = {0};
  cfg.model.channels = 6;
  cfg.model.lora_rank = 2;
  cfg.data.height = 32;
  cfg.data.width = 32;
  cfg.n_train = 4;
  cfg.n_val = 2;
  cfg.skeleton.iterations = 4;
  cfg.eval.skeleton.iterations = 4;
  return cfg;
}

void expect_same_parameters(std::span<const Parameter> a, std::span<const Parameter> b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value) << a[i].name;
}

TEST(Split, TrainAndValidationDiffer) {
  const TrainConfig cfg = tiny_config();
  const DataSplit split = make_split(cfg);
  ASSERT_EQ(split.train.size(), 4u);
  ASSERT_EQ(split.val.size(), 2u);
  EXPECT_NE(split.train[0].mask, split.val[0].mask);
  EXPECT_EQ(make_split(cfg).val[1].image, split.val[1].image);
}

TEST(Batches, DependOnlyOnSeedAndStep) {
  const TrainConfig cfg = tiny_config();
  const DataSplit data = make_split(cfg);
  const TrainSession a(cfg, 3, data), b(cfg, 3, data);
  std::vector<std::size_t> seen(data.train.size(), 0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto idx = a.batch_indices(s);
    EXPECT_EQ(idx, b.batch_indices(s));
    ASSERT_EQ(idx.size(), cfg.batch);
    for (std::size_t i : idx) ++seen.at(i);
  }
  // Ten steps of two cover five full epochs of four samples.
  for (std::size_t count : seen) EXPECT_EQ(count, 5u);
}

TEST(Training, ZeroStepsMatchesFreshModel) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 0;
  const DataSplit data = make_split(cfg);
  const RunResult run = train_run(cfg, data);
  const MetricReport fresh = evaluate_model(ToyModel(cfg.model, 0), data.val, cfg.eval);
  ASSERT_EQ(run.seeds.size(), 1u);
  for (std::size_t k = 0; k < kMetricFields.size(); ++k) {
    EXPECT_EQ(run.seeds[0].validation.aggregate[k].mean, fresh.aggregate[k].mean);
  }
  EXPECT_TRUE(run.seeds[0].curve.empty());
}

TEST(Training, RunsAreReproducible) {
  TrainConfig cfg = tiny_config();
  cfg.seeds = {0, 1};
  const DataSplit data = make_split(cfg);
  const RunResult a = train_run(cfg, data, RunOptions{.threads = 2, .resume = {}});
  const RunResult b = train_run(cfg, data, RunOptions{.threads = 1, .resume = {}});
  const ReportContext ctx{"synth-train", echo_config(cfg), std::nullopt};
  EXPECT_EQ(run_report_json(a, ctx), run_report_json(b, ctx));
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_EQ(seed_report_json(a.seeds[s], a, ctx), seed_report_json(b.seeds[s], b, ctx));
    EXPECT_EQ(loss_curve_tsv(a.seeds[s].curve), loss_curve_tsv(b.seeds[s].curve));
  }
  EXPECT_EQ(a.across_seeds.images[1].id, "seed_1");
}

TEST(Training, ResumedSessionMatchesStraightRun) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 8;
  const DataSplit data = make_split(cfg);

  TrainSession straight(cfg, 0, data);
  std::vector<StepRecord> straight_curve;
  while (!straight.done()) straight_curve.push_back(straight.step());

  TrainSession first(cfg, 0, data);
  for (int i = 0; i < 5; ++i) first.step();
  const auto bytes = encode_checkpoint(first.model().parameters(), first.optimizer(), config_hash(cfg));
  const Checkpoint ckpt = decode_checkpoint(bytes);

  TrainSession resumed(cfg, 0, data);
  resumed.restore(ckpt.parameters, ckpt.optimizer);
  for (std::uint64_t s = 5; s < 8; ++s) {
    const StepRecord r = resumed.step();
    EXPECT_EQ(r.total, straight_curve[s].total) << s;
    EXPECT_EQ(r.lr, straight_curve[s].lr) << s;
  }
  expect_same_parameters(resumed.model().parameters(), straight.model().parameters());
}

TEST(Training, ResumeThroughTrainRun) {
  TrainConfig cfg = tiny_config();
  const DataSplit data = make_split(cfg);
  const RunResult full = train_run(cfg, data);

  TrainSession partial(cfg, 0, data);
  for (int i = 0; i < 2; ++i) partial.step();
  RunOptions options;
  options.resume[0] = decode_checkpoint(encode_checkpoint(partial.model().parameters(), partial.optimizer(), 0));
  const RunResult resumed = train_run(cfg, data, options);
  expect_same_parameters(resumed.seeds[0].final_parameters, full.seeds[0].final_parameters);
  EXPECT_EQ(resumed.seeds[0].curve.size(), 4u);

  TrainConfig shorter = cfg;
  shorter.steps = 1;
  EXPECT_THROW(train_run(shorter, data, options), ValueError);
}

TEST(Training, FrozenParametersStayBitIdentical) {
  const TrainConfig cfg = tiny_config();
  const DataSplit data = make_split(cfg);
  const ToyModel initial(cfg.model, 0);
  const RunResult run = train_run(cfg, data);
  const auto& final_params = run.seeds[0].final_parameters;
  std::size_t frozen = 0, moved = 0;
  for (std::size_t i = 0; i < final_params.size(); ++i) {
    const Parameter& before = initial.parameters()[i];
    if (!before.trainable) {
      EXPECT_EQ(final_params[i].value, before.value) << before.name;
      ++frozen;
    } else if (final_params[i].value != before.value) {
      ++moved;
    }
  }
  EXPECT_EQ(frozen, 4u);
  EXPECT_GT(moved, 0u);
}

TEST(Training, StepZeroLossIsLinearInClWeight) {
  TrainConfig without = tiny_config();
  without.loss_weights = {1, 1, 0, 0};
  TrainConfig with = tiny_config();
  with.loss_weights = {1, 1, 0.5, 0};
  const DataSplit data = make_split(without);
  TrainSession a(without, 0, data), b(with, 0, data);
  const StepRecord ra = a.step(), rb = b.step();
  EXPECT_EQ(ra.cl, rb.cl);
  EXPECT_NEAR(rb.total - ra.total, 0.5 * ra.cl, 1e-12 * std::max(1.0, rb.total));
}

TEST(Training, LearningRateNeverIncreases) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 20;
  const DataSplit data = make_split(cfg);
  const RunResult run = train_run(cfg, data);
  const auto& curve = run.seeds[0].curve;
  ASSERT_EQ(curve.size(), 20u);
  EXPECT_EQ(curve.front().lr, cfg.lr);
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_LE(curve[i].lr, curve[i - 1].lr);
}

TEST(Training, LossDecreasesOverShortRun) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 30;
  cfg.seeds = {0, 1, 2};
  const DataSplit data = make_split(cfg);
  const RunResult run = train_run(cfg, data, RunOptions{.threads = 0, .resume = {}});
  double initial = 0.0, final = 0.0;
  for (const auto& s : run.seeds) {
    initial += s.initial_loss.total;
    final += s.final_loss.total;
  }
  EXPECT_LT(final, initial);
}

TEST(Training, DivergenceReportsStepAndTerms) {
  const TrainingDiverged e(7, StepRecord{.step = 7, .lr = 0.1, .total = 1.0, .bce = 0.5, .dice = 0.25, .cl = 0.5},
                           "combined loss is not finite");
  const std::string msg = e.what();
  EXPECT_EQ(e.step(), 7u);
  EXPECT_NE(msg.find("step 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bce"), std::string::npos) << msg;
  EXPECT_NE(msg.find("not finite"), std::string::npos) << msg;
}

TEST(Ablation, AxisNamesAndValues) {
  EXPECT_EQ(parse_axis("rank"), AblationAxis::rank);
  EXPECT_EQ(parse_axis("lambda_cl"), AblationAxis::lambda_cl);
  EXPECT_THROW(parse_axis("depth"), ValueError);
  EXPECT_EQ(axis_values(AblationAxis::rank), (std::vector<double>{4, 8, 16, 32}));
  EXPECT_EQ(axis_values(AblationAxis::lambda_cl), (std::vector<double>{0, 0.25, 0.5, 1, 2}));
  EXPECT_EQ(axis_name(AblationAxis::lambda_cl), "lambda_cl");
}

TEST(Ablation, RankRowsHaveExactIncreasingCounts) {
  TrainConfig cfg = tiny_config();
  cfg.model.channels = 32;
  cfg.steps = 1;
  std::size_t callbacks = 0;
  const AblationTable table = ablate(AblationAxis::rank, cfg, {}, [&](const AblationRow&) { ++callbacks; });
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(callbacks, 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    TrainConfig c = cfg;
    c.model.lora_rank = static_cast<std::size_t>(table.rows[i].value);
    EXPECT_EQ(table.rows[i].trainable_params, ToyModel(c.model, 0).trainable_count());
    if (i > 0) {
      EXPECT_GT(table.rows[i].trainable_params, table.rows[i - 1].trainable_params);
    }
  }
}

TEST(Ablation, LambdaRowsCarryTheirWeights) {
  TrainConfig cfg = tiny_config();
  cfg.steps = 2;
  const AblationTable table = ablate(AblationAxis::lambda_cl, cfg);
  ASSERT_EQ(table.rows.size(), 5u);
  for (const auto& row : table.rows) {
    EXPECT_EQ(row.weights.cl, row.value);
    EXPECT_EQ(row.weights.bce, 1.0);
    EXPECT_EQ(row.weights.dice, 1.0);
  }
  const std::string tsv = ablation_tsv(table);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 6);
  EXPECT_EQ(tsv.rfind("lambda_cl\t", 0), 0u);
  const std::string json = ablation_json(table, ReportContext{"ablate", echo_config(cfg), std::nullopt});
  EXPECT_NE(json.find("\"toposeg.ablation\""), std::string::npos);
}

TEST(Serializers, LossCurveHasHeaderAndOneLinePerStep) {
  std::vector<StepRecord> curve{{0, 0.1, 1.5, 0.7, 0.5, 0.6}, {1, 0.05, 1.25, 0.6, 0.4, 0.5}};
  const std::string tsv = loss_curve_tsv(curve);
  std::istringstream in(tsv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step\tlr\ttotal\tbce\tdice\tcl");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "0\t");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 3);
}

}  // namespace
}  // namespace toposeg
