#include "toposeg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "report_json.hpp"
#include "toposeg/config.hpp"
#include "toposeg/error.hpp"
#include "toposeg/rng.hpp"

namespace toposeg {

using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(lr_min > 0.0) || lr_min > lr) {
    throw ValueError("train config: require 0 < lr_min <= lr");
  }
  hyper(lr).validate();
  if (!(grad_clip >= 0.0)) throw ValueError("train config: grad_clip must be >= 0");
  if (batch < 1) throw ValueError("train config: batch must be >= 1");
  if (seeds.empty()) throw ValueError("train config: at least one seed is required");
  loss_weights.validate();
  skeleton.validate();
  model.validate();
  data.validate();
  if (n_train < 1 || n_val < 1) throw ValueError("train config: train and validation splits must be nonempty");
  if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) throw ValueError("train config: eval.threshold must lie in (0, 1)");
  if (!(eval.tolerance > 0.0)) throw ValueError("train config: eval.tolerance must be positive");
  if (eval.bins < 1) throw ValueError("train config: eval.bins must be >= 1");
  eval.skeleton.validate();
}

DataSplit make_split(const TrainConfig& cfg) {
  cfg.validate();
  SynthConfig train = cfg.data;
  train.samples = cfg.n_train;
  train.seed = derive_seed(cfg.data.seed, 1);
  SynthConfig val = cfg.data;
  val.samples = cfg.n_val;
  val.seed = derive_seed(cfg.data.seed, 2);
  return {synth_generate(train), synth_generate(val)};
}

TrainingDiverged::TrainingDiverged(std::uint64_t step, StepRecord partial, const std::string& detail)
    : Error([&] {
        std::ostringstream os;
        os << "non-finite loss at step " << step << " (total " << partial.total << ", bce " << partial.bce
           << ", dice " << partial.dice << ", cl " << partial.cl << "): " << detail;
        return os.str();
      }()),
      step_(step),
      terms_(partial) {}

namespace {

struct BatchLoss {
  Var total;
  StepRecord terms;
};

BatchLoss batch_loss(const ToyModel& model, const ToyModel::Binding& binding, Tape& tape,
                     const std::vector<const SamplePair*>& batch, const TrainConfig& cfg) {
  std::optional<Var> total;
  StepRecord terms;
  for (const SamplePair* sample : batch) {
    const Var prob = model.forward(binding, tape.constant(sample->image));
    const LossBreakdown lb = combined_loss(prob, sample->mask.to_tensor(), cfg.loss_weights, cfg.skeleton);
    terms.bce += lb.bce;
    terms.dice += lb.dice;
    terms.cl += lb.cl;
    total = total ? add(*total, lb.total) : lb.total;
  }
  const double n = static_cast<double>(batch.size());
  const Var mean_total = affine(*total, 1.0 / n, 0.0);
  terms.total = mean_total.item();
  terms.bce /= n;
  terms.dice /= n;
  terms.cl /= n;
  return {mean_total, terms};
}

}  // namespace

StepRecord dataset_loss(const ToyModel& model, const std::vector<SamplePair>& samples, const TrainConfig& cfg) {
  if (samples.empty()) throw ValueError("dataset_loss: no samples");
  StepRecord sum;
  for (const auto& s : samples) {
    Tape tape;
    ToyModel::Binding binding;
    for (const auto& p : model.parameters()) binding.leaves.push_back(tape.constant(p.value));
    const StepRecord r = batch_loss(model, binding, tape, {&s}, cfg).terms;
    sum.total += r.total;
    sum.bce += r.bce;
    sum.dice += r.dice;
    sum.cl += r.cl;
  }
  const double n = static_cast<double>(samples.size());
  sum.total /= n;
  sum.bce /= n;
  sum.dice /= n;
  sum.cl /= n;
  return sum;
}

MetricReport evaluate_model(const ToyModel& model, const std::vector<SamplePair>& samples,
                            const EvalOptions& options) {
  std::vector<ImageMetrics> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(evaluate_image(s.id, model.predict(s.image), s.mask, options));
  return aggregate(std::move(images));
}

TrainSession::TrainSession(const TrainConfig& cfg, std::uint64_t seed, const DataSplit& data)
    : cfg_(cfg), seed_(seed), data_(&data), model_(cfg.model, seed) {
  cfg_.validate();
  if (data.train.empty()) throw ValueError("train: empty training split");
  opt_ = OptState::zeros_like(model_.parameters());
}

std::vector<std::size_t> TrainSession::batch_indices(std::uint64_t step) const {
  const std::size_t n = data_->train.size();
  std::vector<std::size_t> out;
  out.reserve(cfg_.batch);
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> perm;
  for (std::size_t k = 0; k < cfg_.batch; ++k) {
    const std::uint64_t position = step * cfg_.batch + k;
    const std::uint64_t epoch = position / n;
    if (epoch != cached_epoch) {
      Rng rng(derive_seed(seed_, 1000 + epoch));
      perm = rng.permutation(n);
      cached_epoch = epoch;
    }
    out.push_back(perm[position % n]);
  }
  return out;
}

StepRecord TrainSession::step() {
  if (done()) throw ValueError("train: all configured steps already ran");
  const std::uint64_t s = opt_.step;
  StepRecord rec;
  rec.step = s;
  rec.lr = cosine_lr(s, cfg_.steps, cfg_.lr, cfg_.lr_min);
  try {
    Tape tape;
    const ToyModel::Binding binding = model_.bind(tape);
    std::vector<const SamplePair*> batch;
    for (std::size_t i : batch_indices(s)) batch.push_back(&data_->train[i]);
    const BatchLoss loss = batch_loss(model_, binding, tape, batch, cfg_);
    const double lr = rec.lr;
    rec = loss.terms;
    rec.step = s;
    rec.lr = lr;
    if (!std::isfinite(rec.total)) throw NumericError("combined loss is not finite");

    const Gradients grads = tape.backward(loss.total);
    auto params = model_.parameters();
    std::vector<Tensor> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].trainable) g[i] = grads.at(binding.leaves[i]);
    }
    if (cfg_.grad_clip > 0.0) {
      const double norm = global_norm(g);
      if (norm > cfg_.grad_clip) {
        const double factor = cfg_.grad_clip / norm;
        for (auto& t : g)
          for (double& v : t.mutable_data()) v *= factor;
      }
    }
    adamw_step(params, g, opt_, cfg_.hyper(rec.lr));
  } catch (const NumericError& e) {
    throw TrainingDiverged(s, rec, e.what());
  }
  return rec;
}

void TrainSession::restore(std::span<const Parameter> params, OptState state) {
  model_.load_parameters(params);
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("train: optimizer state does not match parameters");
  }
  opt_ = std::move(state);
}

namespace {

SeedResult run_seed(const TrainConfig& cfg, std::uint64_t seed, const DataSplit& data,
                    const Checkpoint* resume) {
  TrainSession session(cfg, seed, data);
  if (resume) {
    if (resume->optimizer.step > cfg.steps) {
      throw ValueError("resume: checkpoint is at step " + std::to_string(resume->optimizer.step) +
                       ", past the configured " + std::to_string(cfg.steps) + " steps");
    }
    session.restore(resume->parameters, resume->optimizer);
  }
  SeedResult result;
  result.seed = seed;
  result.initial_loss = dataset_loss(session.model(), data.train, cfg);
  result.curve.reserve(cfg.steps - session.steps_done());
  while (!session.done()) result.curve.push_back(session.step());
  result.final_loss = dataset_loss(session.model(), data.train, cfg);
  if (!std::isfinite(result.final_loss.total)) {
    throw TrainingDiverged(cfg.steps, result.final_loss, "final training loss is not finite");
  }
  result.validation = evaluate_model(session.model(), data.val, cfg.eval);
  const auto params = session.model().parameters();
  result.final_parameters.assign(params.begin(), params.end());
  result.final_optimizer = session.optimizer();
  return result;
}

}  // namespace

RunResult train_run(const TrainConfig& cfg, const DataSplit& data, const RunOptions& options) {
  cfg.validate();
  if (data.train.empty() || data.val.empty()) throw ValueError("train_run: splits must be nonempty");

  const std::size_t n = cfg.seeds.size();
  std::vector<SeedResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);

  auto worker = [&](std::size_t t) {
    for (std::size_t i = t; i < n; i += threads) {
      try {
        const auto it = options.resume.find(cfg.seeds[i]);
        results[i] = run_seed(cfg, cfg.seeds[i], data, it == options.resume.end() ? nullptr : &it->second);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunResult run;
  run.budget = count_params(ToyModel(cfg.model, cfg.seeds.front()).param_config());
  std::vector<ImageMetrics> per_seed;
  for (const auto& r : results) {
    ImageMetrics m;
    m.id = "seed_" + std::to_string(r.seed);
    for (std::size_t f = 0; f < kMetricFields.size(); ++f) m.*(kMetricFields[f].member) = r.validation.aggregate[f].mean;
    for (const auto& img : r.validation.images)
      for (const auto& w : img.warnings) m.warnings.push_back(img.id + ": " + w);
    per_seed.push_back(std::move(m));
  }
  run.across_seeds = aggregate(std::move(per_seed));
  run.seeds = std::move(results);
  return run;
}

std::string_view axis_name(AblationAxis axis) {
  return axis == AblationAxis::rank ? "rank" : "lambda_cl";
}

AblationAxis parse_axis(std::string_view name) {
  if (name == "rank") return AblationAxis::rank;
  if (name == "lambda_cl") return AblationAxis::lambda_cl;
  throw ValueError("unknown ablation axis '" + std::string(name) + "' (expected rank or lambda_cl)");
}

std::vector<double> axis_values(AblationAxis axis) {
  if (axis == AblationAxis::rank) return {4, 8, 16, 32};
  return {0.0, 0.25, 0.5, 1.0, 2.0};
}

AblationTable ablate(AblationAxis axis, const TrainConfig& base, const RunOptions& options,
                     const std::function<void(const AblationRow&)>& on_row) {
  base.validate();
  std::vector<TrainConfig> cells;
  for (double v : axis_values(axis)) {
    TrainConfig cfg = base;
    if (axis == AblationAxis::rank) {
      cfg.model.lora_rank = static_cast<std::size_t>(v);
    } else {
      cfg.loss_weights.cl = v;
    }
    cfg.validate();
    cells.push_back(std::move(cfg));
  }
  const DataSplit data = make_split(base);

  AblationTable table;
  table.axis = axis;
  const std::vector<double> values = axis_values(axis);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    AblationRow row;
    row.value = values[i];
    row.weights = cells[i].loss_weights;
    row.run = train_run(cells[i], data, options);
    row.trainable_params = row.run.budget.trainable;
    const double n = static_cast<double>(row.run.seeds.size());
    for (const auto& s : row.run.seeds) {
      row.final_loss.total += s.final_loss.total / n;
      row.final_loss.bce += s.final_loss.bce / n;
      row.final_loss.dice += s.final_loss.dice / n;
      row.final_loss.cl += s.final_loss.cl / n;
    }
    if (on_row) on_row(row);
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

ordered_json terms_json(const StepRecord& r) {
  return {{"total", r.total}, {"bce", r.bce}, {"dice", r.dice}, {"cl", r.cl}};
}

ordered_json budget_json(const ParamBudget& b) {
  return {{"lora", b.lora},       {"adapter", b.adapter}, {"head", b.head},
          {"trainable", b.trainable}, {"total", b.total},   {"trainable_fraction", b.trainable_fraction}};
}

ordered_json weights_json(const LossWeights& w) {
  return {{"lambda_bce", w.bce}, {"lambda_dice", w.dice}, {"lambda_cl", w.cl}, {"lambda_bd", w.boundary}};
}

}  // namespace

std::string seed_report_json(const SeedResult& seed, const RunResult& run, const ReportContext& ctx) {
  ordered_json doc = detail::metric_report_document(seed.validation, ctx);
  ordered_json curve;
  for (const char* key : {"lr", "total", "bce", "dice", "cl"}) curve[key] = ordered_json::array();
  for (const auto& r : seed.curve) {
    curve["lr"].push_back(r.lr);
    curve["total"].push_back(r.total);
    curve["bce"].push_back(r.bce);
    curve["dice"].push_back(r.dice);
    curve["cl"].push_back(r.cl);
  }
  doc["training"] = {{"seed", seed.seed},
                     {"steps", seed.curve.size()},
                     {"initial_loss", terms_json(seed.initial_loss)},
                     {"final_loss", terms_json(seed.final_loss)},
                     {"params", budget_json(run.budget)},
                     {"loss_curve", std::move(curve)}};
  return detail::dump_document(doc);
}

std::string run_report_json(const RunResult& run, const ReportContext& ctx) {
  ordered_json doc = detail::metric_report_document(run.across_seeds, ctx);
  ordered_json seeds = ordered_json::array();
  for (const auto& s : run.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"initial_loss", terms_json(s.initial_loss)},
                     {"final_loss", terms_json(s.final_loss)}});
  }
  doc["training"] = {{"params", budget_json(run.budget)}, {"seeds", std::move(seeds)}};
  return detail::dump_document(doc);
}

std::string ablation_json(const AblationTable& table, const ReportContext& ctx) {
  ordered_json doc;
  doc["format"] = "toposeg.ablation";
  doc["format_version"] = 1;
  doc["tool"] = kToolName;
  doc["tool_version"] = kToolVersion;
  doc["command"] = ctx.command;
  if (ctx.timestamp) doc["timestamp"] = *ctx.timestamp;
  ordered_json config = ordered_json::object();
  for (const auto& [k, v] : ctx.config) config[k] = v;
  doc["config"] = std::move(config);
  doc["axis"] = axis_name(table.axis);
  ordered_json rows = ordered_json::array();
  for (const auto& row : table.rows) {
    ordered_json metrics;
    for (std::size_t f = 0; f < kMetricFields.size(); ++f) {
      metrics[std::string(kMetricFields[f].name)] = {{"mean", row.run.across_seeds.aggregate[f].mean},
                                                     {"std", row.run.across_seeds.aggregate[f].std}};
    }
    rows.push_back({{"value", row.value},
                    {"trainable_params", row.trainable_params},
                    {"weights", weights_json(row.weights)},
                    {"final_loss", terms_json(row.final_loss)},
                    {"metrics", std::move(metrics)}});
  }
  doc["rows"] = std::move(rows);
  return detail::dump_document(doc);
}

std::string ablation_tsv(const AblationTable& table) {
  std::ostringstream os;
  os << axis_name(table.axis) << "\ttrainable_params";
  for (const auto& f : kMetricFields) os << '\t' << f.name << "_mean\t" << f.name << "_std";
  os << "\tfinal_total\tfinal_bce\tfinal_dice\tfinal_cl\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (const auto& row : table.rows) {
    os << format_double(row.value) << '\t' << row.trainable_params;
    for (const auto& s : row.run.across_seeds.aggregate) os << '\t' << s.mean << '\t' << s.std;
    os << '\t' << row.final_loss.total << '\t' << row.final_loss.bce << '\t' << row.final_loss.dice << '\t'
       << row.final_loss.cl << '\n';
  }
  return os.str();
}

std::string loss_curve_tsv(const std::vector<StepRecord>& curve) {
  std::ostringstream os;
  os << "step\tlr\ttotal\tbce\tdice\tcl\n";
  os.precision(17);
  for (const auto& r : curve) {
    os << r.step << '\t' << r.lr << '\t' << r.total << '\t' << r.bce << '\t' << r.dice << '\t' << r.cl << '\n';
  }
  return os.str();
}

}  // namespace toposeg
