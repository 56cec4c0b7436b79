#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "toposeg/checkpoint.hpp"
#include "toposeg/error.hpp"
#include "toposeg/losses.hpp"
#include "toposeg/metrics.hpp"
#include "toposeg/model.hpp"
#include "toposeg/optim.hpp"
#include "toposeg/peft.hpp"
#include "toposeg/report.hpp"
#include "toposeg/synth.hpp"

namespace toposeg {

struct TrainConfig {
  double lr = 1e-4;
  double lr_min = 1e-6;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global-norm gradient clip; 0 disables clipping.
  double grad_clip = 0.0;
  std::uint64_t steps = 200;
  std::size_t batch = 4;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  LossWeights loss_weights{};
  SkeletonConfig skeleton{};
  ModelConfig model{};
  /// Training images are smaller than the generator default to keep a seed under a minute.
  SynthConfig data{.height = 48, .width = 48};
  std::size_t n_train = 16;
  std::size_t n_val = 8;
  EvalOptions eval{};

  void validate() const;
  AdamWHyper hyper(double lr_now) const {
    return {lr_now, beta1, beta2, adam_eps, weight_decay};
  }
};

struct DataSplit {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
};

/// Train and validation sets drawn from `cfg.data` with independent seeds.
DataSplit make_split(const TrainConfig& cfg);

struct StepRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  double cl = 0.0;
};

/// Raised when a loss or update becomes non-finite.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::uint64_t step, StepRecord partial, const std::string& detail);
  std::uint64_t step() const { return step_; }
  const StepRecord& terms() const { return terms_; }

 private:
  std::uint64_t step_;
  StepRecord terms_;
};

/// Mean combined loss and term values of `model` over a sample list.
StepRecord dataset_loss(const ToyModel& model, const std::vector<SamplePair>& samples,
                        const TrainConfig& cfg);

/// Validation metrics of `model` on every sample, aggregated.
MetricReport evaluate_model(const ToyModel& model, const std::vector<SamplePair>& samples,
                            const EvalOptions& options);

/// Stepwise training of one seed. Batch composition is a pure function of
/// (seed, step), so a session restored from a checkpoint continues exactly.
class TrainSession {
 public:
  TrainSession(const TrainConfig& cfg, std::uint64_t seed, const DataSplit& data);

  StepRecord step();
  bool done() const { return opt_.step >= cfg_.steps; }
  std::uint64_t steps_done() const { return opt_.step; }

  const ToyModel& model() const { return model_; }
  const OptState& optimizer() const { return opt_; }
  std::uint64_t seed() const { return seed_; }

  void restore(std::span<const Parameter> params, OptState state);

  /// Sample indices of the batch used at `step`.
  std::vector<std::size_t> batch_indices(std::uint64_t step) const;

 private:
  TrainConfig cfg_;
  std::uint64_t seed_;
  const DataSplit* data_;
  ToyModel model_;
  OptState opt_;
};

struct SeedResult {
  std::uint64_t seed = 0;
  MetricReport validation;
  std::vector<StepRecord> curve;
  /// Full-train-set loss before the first and after the last step.
  StepRecord initial_loss;
  StepRecord final_loss;
  std::vector<Parameter> final_parameters;
  OptState final_optimizer;
};

struct RunResult {
  std::vector<SeedResult> seeds;
  ParamBudget budget;
  /// One entry per seed (id "seed_<k>") holding its mean validation metrics,
  /// with mean/std across seeds.
  MetricReport across_seeds;
};

struct RunOptions {
  /// Seeds trained concurrently; 0 picks the hardware concurrency.
  std::size_t threads = 1;
  /// Saved state to continue from, keyed by seed. Seeds without an entry
  /// start fresh. Initial losses are then measured at the resume point.
  std::map<std::uint64_t, Checkpoint> resume;
};

/// Trains every seed of `cfg` and evaluates it on the validation split.
RunResult train_run(const TrainConfig& cfg, const DataSplit& data, const RunOptions& options = {});

enum class AblationAxis { rank, lambda_cl };

std::string_view axis_name(AblationAxis axis);
AblationAxis parse_axis(std::string_view name);
/// {4, 8, 16, 32} for rank; {0, 0.25, 0.5, 1, 2} for lambda_cl.
std::vector<double> axis_values(AblationAxis axis);

struct AblationRow {
  double value = 0.0;
  std::uint64_t trainable_params = 0;
  LossWeights weights;
  /// Mean over seeds of the final full-train-set loss terms.
  StepRecord final_loss;
  RunResult run;
};

struct AblationTable {
  AblationAxis axis = AblationAxis::rank;
  std::vector<AblationRow> rows;
};

/// One train_run per axis value with every other setting fixed.
AblationTable ablate(AblationAxis axis, const TrainConfig& base, const RunOptions& options = {},
                     const std::function<void(const AblationRow&)>& on_row = {});

/// Per-seed report: metric report of the seed's validation images plus a
/// "training" section (seed, loss curve, initial/final loss, parameter budget).
std::string seed_report_json(const SeedResult& seed, const RunResult& run, const ReportContext& ctx);
/// Aggregate report: one entry per seed, mean/std across seeds.
std::string run_report_json(const RunResult& run, const ReportContext& ctx);
std::string ablation_json(const AblationTable& table, const ReportContext& ctx);
/// Tab-separated table: axis value, trainable params, metric mean and std columns.
std::string ablation_tsv(const AblationTable& table);
/// Tab-separated loss curve: step, lr, total, bce, dice, cl.
std::string loss_curve_tsv(const std::vector<StepRecord>& curve);

}  // namespace toposeg
