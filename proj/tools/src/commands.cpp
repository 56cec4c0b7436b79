#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "toposeg/checkpoint.hpp"
#include "toposeg/config.hpp"
#include "toposeg/error.hpp"
#include "toposeg/losses.hpp"
#include "toposeg/metrics.hpp"
#include "toposeg/pgm.hpp"
#include "toposeg/report.hpp"
#include "toposeg/trainer.hpp"

namespace toposeg::cli {

namespace fs = std::filesystem;

namespace {

std::size_t thread_count() {
  const char* env = std::getenv(kThreadsEnv);
  if (env && *env) {
    char* end = nullptr;
    const unsigned long long n = std::strtoull(env, &end, 10);
    if (*end != '\0' || n == 0) {
      throw ValueError(std::string(kThreadsEnv) + " must be a positive integer, got '" + env + "'");
    }
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir.string() + "'");
}

std::optional<std::string> timestamp(bool deterministic) {
  if (deterministic) return std::nullopt;
  return utc_timestamp();
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; the first failure in
// index order is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&](std::size_t t, std::size_t stride) {
    for (std::size_t i = t; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::min(threads, n);
  if (threads <= 1) {
    worker(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t, threads);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pred_dir;
  std::string gt_dir;
  double threshold = 0.5;
  double tolerance = 2.0;
  std::size_t bins = 10;
  int skeleton_iterations = SkeletonConfig{}.iterations;
  std::string out = "report.json";
  std::string check;
  bool deterministic = false;
};

std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a readable directory");
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    if (!files.emplace(stem, entry.path()).second) {
      throw ValueError("'" + dir.string() + "' has more than one file with stem '" + stem + "'");
    }
  }
  if (ec) throw IoError("cannot list '" + dir.string() + "'");
  return files;
}

int cmd_check(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  const std::string text = read_text(args.check);
  try {
    const MetricReport report = parse_metric_report(text);
    out << "ok: " << args.check << " (" << report.images.size() << " images)\n";
    return kExitOk;
  } catch (const FormatError& e) {
    err << "invalid report " << args.check << ": " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.check.empty()) return cmd_check(args, out, err);
  if (args.pred_dir.empty() || args.gt_dir.empty()) {
    err << "eval: --pred and --gt are required unless --check is given\n";
    return kExitUsage;
  }
  const auto preds = files_by_stem(args.pred_dir);
  const auto gts = files_by_stem(args.gt_dir);

  std::vector<std::string> stems;
  std::vector<std::string> orphans;
  for (const auto& [stem, path] : preds) {
    if (gts.contains(stem)) {
      stems.push_back(stem);
    } else {
      orphans.push_back(path.string() + " (no ground truth)");
    }
  }
  for (const auto& [stem, path] : gts) {
    if (!preds.contains(stem)) orphans.push_back(path.string() + " (no prediction)");
  }
  if (stems.empty()) {
    err << "eval: no file names in common between " << args.pred_dir << " and " << args.gt_dir << "\n";
    return kExitUsage;
  }
  if (!orphans.empty()) {
    for (const auto& o : orphans) err << "orphan: " << o << "\n";
    return kExitIo;
  }

  EvalOptions options;
  options.threshold = args.threshold;
  options.tolerance = args.tolerance;
  options.bins = args.bins;
  options.skeleton.iterations = args.skeleton_iterations;
  options.skeleton.validate();

  std::vector<ImageMetrics> images(stems.size());
  parallel_for(stems.size(), thread_count(), [&](std::size_t i) {
    const Tensor prob = read_prob(preds.at(stems[i]));
    const BinaryMask gt = read_mask(gts.at(stems[i]));
    images[i] = evaluate_image(stems[i], prob, gt, options);
  });
  const MetricReport report = aggregate(std::move(images));

  ReportContext ctx;
  ctx.command = "eval";
  ctx.config = {{"pred", args.pred_dir},
                {"gt", args.gt_dir},
                {"threshold", format_double(args.threshold)},
                {"tolerance", format_double(args.tolerance)},
                {"bins", std::to_string(args.bins)},
                {"skeleton_iterations", std::to_string(args.skeleton_iterations)}};
  ctx.timestamp = timestamp(args.deterministic);
  write_text(args.out, metric_report_json(report, ctx));

  for (const auto& img : report.images)
    for (const auto& w : img.warnings) err << "warning: " << img.id << ": " << w << "\n";
  out << metric_report_text(report);
  return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  GradcheckOptions options;
  std::string dump = "gradcheck_failures.json";
};

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<OpCheck> checks = run_gradcheck(args.options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<OpCheck> failed;
  for (const auto& c : checks) {
    char line[160];
    std::snprintf(line, sizeof line, "%-16s trials=%zu max_rel_err=%.3e %s\n", c.op.c_str(), c.trials,
                  c.max_error, c.passed ? "PASS" : "FAIL");
    out << line;
    if (!c.passed) failed.push_back(c);
  }
  char summary[96];
  std::snprintf(summary, sizeof summary, "%zu/%zu ops passed in %.1f s\n", checks.size() - failed.size(),
                checks.size(), seconds);
  out << summary;
  if (failed.empty()) return kExitOk;
  write_text(args.dump, worst_cases_json(failed, args.options.seed));
  err << "gradcheck: worst-case inputs written to " << args.dump << "\n";
  return kExitCheckFailed;
}

// ---- skeletonize ------------------------------------------------------------

struct SkeletonizeArgs {
  std::string input;
  int iterations = SkeletonConfig{}.iterations;
  std::string out;
};

int cmd_skeletonize(const SkeletonizeArgs& args, std::ostream& out, std::ostream&) {
  const SkeletonConfig cfg{args.iterations};
  cfg.validate();
  const Tensor prob = read_prob(args.input);
  const Tensor skel = soft_skeleton(prob, cfg);
  write_prob(skel, args.out);
  double mass = 0.0;
  for (double v : skel.data()) mass += v;
  out << "skeleton written to " << args.out << " (mass " << format_double(mass) << ")\n";
  return kExitOk;
}

// ---- synth-train / ablate ---------------------------------------------------

TrainConfig load_config(const std::string& path) {
  if (path.empty()) {
    TrainConfig cfg;
    cfg.validate();
    return cfg;
  }
  return load_train_config(path);
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume_from;
  bool deterministic = false;
};

std::string seed_file(std::uint64_t seed, std::string_view ext) {
  return "seed_" + std::to_string(seed) + std::string(ext);
}

int cmd_synth_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = load_config(args.config);
  const std::uint64_t hash = config_hash(cfg);
  RunOptions options;
  options.threads = thread_count();
  if (!args.resume_from.empty()) {
    for (std::uint64_t seed : cfg.seeds) {
      Checkpoint ckpt = checkpoint_load(fs::path(args.resume_from) / seed_file(seed, ".ckpt"));
      if (auto warning = config_mismatch_warning(ckpt, hash)) err << "warning: seed " << seed << ": " << *warning << "\n";
      options.resume.emplace(seed, std::move(ckpt));
    }
  }
  make_dir(args.out);

  const DataSplit data = make_split(cfg);
  RunResult run;
  try {
    run = train_run(cfg, data, options);
  } catch (const TrainingDiverged& e) {
    err << "synth-train: training diverged: " << e.what() << "\n";
    return kExitCheckFailed;
  }

  ReportContext ctx;
  ctx.command = "synth-train";
  ctx.config = echo_config(cfg);
  ctx.timestamp = timestamp(args.deterministic);
  const fs::path dir(args.out);
  write_text(dir / "config.cfg", config_text(cfg));
  for (const auto& s : run.seeds) {
    write_text(dir / seed_file(s.seed, ".json"), seed_report_json(s, run, ctx));
    write_text(dir / ("loss_" + seed_file(s.seed, ".tsv")), loss_curve_tsv(s.curve));
    checkpoint_save(s.final_parameters, s.final_optimizer, hash, dir / seed_file(s.seed, ".ckpt"));
  }
  write_text(dir / "report.json", run_report_json(run, ctx));

  for (const auto& s : run.seeds) {
    char line[200];
    std::snprintf(line, sizeof line, "seed %llu: loss %.6f -> %.6f, val dice %.4f, cl_dice %.4f\n",
                  static_cast<unsigned long long>(s.seed), s.initial_loss.total, s.final_loss.total,
                  s.validation.summary("dice").mean, s.validation.summary("cl_dice").mean);
    out << line;
  }
  out << "trainable params: " << run.budget.trainable << " of " << run.budget.total << "\n";
  out << metric_report_text(run.across_seeds);
  return kExitOk;
}

struct AblateArgs {
  std::string axis;
  std::string config;
  std::string out;
  bool deterministic = false;
};

int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err) {
  const AblationAxis axis = parse_axis(args.axis);
  const TrainConfig cfg = load_config(args.config);
  RunOptions options;
  options.threads = thread_count();
  make_dir(args.out);

  AblationTable table;
  try {
    table = ablate(axis, cfg, options, [&](const AblationRow& row) {
      err << axis_name(axis) << " = " << format_double(row.value) << " done\n";
    });
  } catch (const TrainingDiverged& e) {
    err << "ablate: training diverged: " << e.what() << "\n";
    return kExitCheckFailed;
  }

  ReportContext ctx;
  ctx.command = "ablate";
  ctx.config = echo_config(cfg);
  ctx.timestamp = timestamp(args.deterministic);
  const fs::path dir(args.out);
  const std::string tsv = ablation_tsv(table);
  write_text(dir / "ablation.json", ablation_json(table, ctx));
  write_text(dir / "ablation.tsv", tsv);
  out << tsv;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const CLI::Range kAtLeastOne(1, std::numeric_limits<int>::max());
  CLI::App app{"Topology-aware thin-structure segmentation toolkit", "toposeg"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  app.footer("Exit codes: 0 ok, 1 check failure or diverged training, 2 usage error, 3 I/O error.\n"
             "Set " + std::string(kThreadsEnv) + " to override the worker thread count.");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  eval_cmd->add_option("--pred", eval.pred_dir, "Directory of probability maps or masks (PGM)");
  eval_cmd->add_option("--gt", eval.gt_dir, "Directory of ground-truth masks (PGM), matched by file stem");
  eval_cmd->add_option("--threshold", eval.threshold, "Binarization threshold")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--tolerance", eval.tolerance, "Boundary F-score distance tolerance in pixels")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--bins", eval.bins, "Calibration bins")->check(kAtLeastOne);
  eval_cmd->add_option("--skeleton-iters", eval.skeleton_iterations, "Soft skeleton iterations for clDice")
      ->check(kAtLeastOne);
  eval_cmd->add_option("--out", eval.out, "Report file");
  eval_cmd->add_option("--check", eval.check, "Validate an existing report file and exit");
  eval_cmd->add_flag("--deterministic", eval.deterministic, "Omit the timestamp from the report");

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Check gradients against central finite differences");
  std::string op_list;
  for (auto name : gradcheck_op_names()) op_list += (op_list.empty() ? "" : ", ") + std::string(name);
  grad_cmd->add_option("--ops", grad.options.ops, "Comma-separated ops to check (default all): " + op_list)
      ->delimiter(',');
  grad_cmd->add_option("--trials", grad.options.trials, "Random trials per op")->check(kAtLeastOne);
  grad_cmd->add_option("--seed", grad.options.seed, "Base random seed");
  grad_cmd->add_option("--tolerance", grad.options.tolerance, "Maximum relative error")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--dump", grad.dump, "Where to write worst-case inputs of failing ops");

  SkeletonizeArgs skel;
  auto* skel_cmd = app.add_subcommand("skeletonize", "Write the soft skeleton of a mask or probability map");
  skel_cmd->add_option("--input", skel.input, "Input PGM")->required();
  skel_cmd->add_option("--iterations", skel.iterations, "Erosion iterations")->check(kAtLeastOne);
  skel_cmd->add_option("--out", skel.out, "Output 16-bit PGM")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("synth-train", "Train the toy segmenter on synthetic thin structures");
  train_cmd->add_option("--config", train.config, "Config file (key = value); built-in defaults when omitted");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--resume-from", train.resume_from, "Directory holding seed_<k>.ckpt files to continue");
  train_cmd->add_flag("--deterministic", train.deterministic, "Omit timestamps from reports");

  AblateArgs abl;
  auto* abl_cmd = app.add_subcommand("ablate", "Sweep LoRA rank or clDice weight");
  abl_cmd->add_option("--axis", abl.axis, "rank (4, 8, 16, 32) or lambda_cl (0, 0.25, 0.5, 1, 2)")
      ->required()
      ->check(CLI::IsMember({"rank", "lambda_cl"}));
  abl_cmd->add_option("--config", abl.config, "Base config file; built-in defaults when omitted");
  abl_cmd->add_option("--out", abl.out, "Output directory")->required();
  abl_cmd->add_flag("--deterministic", abl.deterministic, "Omit timestamps from reports");

  std::vector<std::string> argv_store{"toposeg"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (eval_cmd->parsed()) return cmd_eval(eval, out, err);
    if (grad_cmd->parsed()) return cmd_gradcheck(grad, out, err);
    if (skel_cmd->parsed()) return cmd_skeletonize(skel, out, err);
    if (train_cmd->parsed()) return cmd_synth_train(train, out, err);
    if (abl_cmd->parsed()) return cmd_ablate(abl, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const LimitError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValueError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}

}  // namespace toposeg::cli
