#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgbp/bp.hpp"
#include "fgbp/exact.hpp"
#include "fgbp/factor_graph.hpp"
#include "fgbp/json_out.hpp"
#include "fgbp/run_config.hpp"
#include "fgbp/scoring.hpp"
#include "fgbp/synthetic_sgg.hpp"
#include "fgbp/train_eval.hpp"

namespace fgbp::cli {

// Exit codes: 0 success, 1 I/O, 2 validation, 3 capacity, 4 checkpoint.
inline int exit_code_for(const Error& e) {
  if (dynamic_cast<const IoError*>(&e)) return 1;
  if (dynamic_cast<const CapacityError*>(&e)) return 3;
  if (dynamic_cast<const CheckpointError*>(&e)) return 4;
  return 2;
}

struct RunContext {
  std::string out_dir;
  std::uint64_t seed = 1;
  int threads = 1;
  bool deterministic = true;
};

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
}

inline void finish_run(const RunContext& ctx, const RunConfig& cfg,
                       const std::string& command,
                       std::vector<std::string> outputs) {
  cfg.reject_unknown();
  detail::write_file(ctx.out_dir + "/resolved_config.toml", cfg.to_toml());
  outputs.push_back("resolved_config.toml");
  outputs.push_back("manifest.json");
  Json manifest = Json::object();
  manifest.set("command", Json::string(command));
  manifest.set("deterministic", Json::boolean(ctx.deterministic));
  Json files = Json::array();
  for (const std::string& f : outputs) files.push(Json::string(f));
  manifest.set("outputs", std::move(files));
  manifest.set("seed", Json::integer(static_cast<long long>(ctx.seed)));
  manifest.set("threads", Json::integer(ctx.threads));
  detail::write_file(ctx.out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

inline void ensure_out_dir(const RunContext& ctx) {
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.out_dir);
}

inline DatasetSpec dataset_spec_from(const RunConfig& cfg, std::uint64_t seed) {
  DatasetSpec s;
  s.instance_classes =
      static_cast<int>(cfg.get_int("dataset", "instance_classes", s.instance_classes));
  s.predicate_classes =
      static_cast<int>(cfg.get_int("dataset", "predicate_classes", s.predicate_classes));
  s.entities_min = static_cast<int>(cfg.get_int("dataset", "entities_min", s.entities_min));
  s.entities_max = static_cast<int>(cfg.get_int("dataset", "entities_max", s.entities_max));
  s.scenes = static_cast<int>(cfg.get_int("dataset", "scenes", s.scenes));
  s.zipf_exponent = cfg.get_double("dataset", "zipf_exponent", s.zipf_exponent);
  s.feature_dim = static_cast<int>(cfg.get_int("dataset", "feature_dim", s.feature_dim));
  s.noise_sigma = cfg.get_double("dataset", "noise_sigma", s.noise_sigma);
  s.seed = cfg.get_u64("dataset", "seed", seed);
  s.context_classes =
      static_cast<int>(cfg.get_int("dataset", "context_classes", s.context_classes));
  s.context_scale = cfg.get_double("dataset", "context_scale", s.context_scale);
  s.key_classes = static_cast<int>(cfg.get_int("dataset", "key_classes", s.key_classes));
  s.relation_density = cfg.get_double("dataset", "relation_density", s.relation_density);
  s.dominant_weight = cfg.get_double("dataset", "dominant_weight", s.dominant_weight);
  s.validate();
  return s;
}

inline SggTask task_from(const std::string& name) {
  if (name == "predcls") return SggTask::PredCls;
  if (name == "sgcls") return SggTask::SgCls;
  if (name == "sgdet_analogue") return SggTask::SgDetAnalogue;
  throw ValidationError("unknown task \"" + name +
                        "\" (predcls | sgcls | sgdet_analogue)");
}

inline Aggregator aggregator_from(const std::string& name) {
  if (name == "mean") return Aggregator::Mean;
  if (name == "max") return Aggregator::Max;
  throw ValidationError("unknown aggregator \"" + name + "\" (mean | max)");
}

inline TrainConfig train_config_from(const RunConfig& cfg, const RunContext& ctx) {
  TrainConfig t;
  const std::string opt = cfg.get_string("train", "optimizer", "adam");
  if (opt == "sgd") t.optimizer = Optimizer::Sgd;
  else if (opt == "adam") t.optimizer = Optimizer::Adam;
  else throw ValidationError("unknown optimizer \"" + opt + "\" (sgd | adam)");
  if (cfg.has("train", "learning_rate"))
    t.learning_rate = cfg.get_double("train", "learning_rate", 0.0);
  t.batch_size = static_cast<int>(cfg.get_int("train", "batch_size", t.batch_size));
  t.epochs = static_cast<int>(cfg.get_int("train", "epochs", t.epochs));
  t.seed = ctx.seed;
  t.task = task_from(cfg.get_string("train", "task", "predcls"));
  t.aggregator = aggregator_from(cfg.get_string("nbp", "aggregator", "mean"));
  t.higher_order = cfg.get_bool("nbp", "higher_order", true);
  t.background_weight =
      cfg.get_double("train", "background_weight", t.background_weight);
  t.grad_clip = cfg.get_double("train", "grad_clip", t.grad_clip);
  t.threads = ctx.threads;
  t.sampler.enabled = cfg.get_bool("sampler", "enabled", t.sampler.enabled);
  t.sampler.repeat_threshold =
      cfg.get_double("sampler", "repeat_threshold", t.sampler.repeat_threshold);
  t.sampler.drop_rate = cfg.get_double("sampler", "drop_rate", t.sampler.drop_rate);
  t.validate();
  return t;
}

inline NbpWidths widths_from(const RunConfig& cfg, const DatasetSpec& spec,
                             SggTask task) {
  NbpWidths w;
  w.input = static_cast<std::size_t>(spec.feature_dim) +
            (task == SggTask::PredCls
                 ? static_cast<std::size_t>(spec.instance_classes)
                 : 0);
  w.state = cfg.get_u64("nbp", "state", 32);
  w.edge = cfg.get_u64("nbp", "edge", 16);
  w.hidden = cfg.get_u64("nbp", "hidden", 32);
  w.instance_classes = static_cast<std::size_t>(spec.instance_classes);
  w.predicate_classes = static_cast<std::size_t>(spec.predicate_classes) + 1;
  w.validate();
  return w;
}

// Default layer counts per task: 2 for predcls, 1 for sgcls, 3 for the
// sgdet analogue.
inline std::size_t default_layers(SggTask task) {
  switch (task) {
    case SggTask::PredCls: return 2;
    case SggTask::SgCls: return 1;
    case SggTask::SgDetAnalogue: return 3;
  }
  return 2;
}

inline GroupThresholds thresholds_from_dataset_dir(const std::string& dir) {
  std::ifstream in(dir + "/dataset_manifest.json", std::ios::binary);
  if (!in) throw IoError("cannot read " + dir + "/dataset_manifest.json");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
    GroupThresholds t;
    t.head_min_share = doc.at("groups").at("head_min_share").get<double>();
    t.tail_max_share = doc.at("groups").at("tail_max_share").get<double>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("dataset manifest: ") + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen: dataset files + sidecar manifest + summary
// ---------------------------------------------------------------------------

inline int cmd_gen(RunConfig cfg, const RunContext& ctx) {
  detail::ensure_out_dir(ctx);
  DatasetSpec spec = detail::dataset_spec_from(cfg, ctx.seed);
  GroupThresholds thresholds;
  thresholds.head_min_share =
      cfg.get_double("dataset", "head_min_share", thresholds.head_min_share);
  thresholds.tail_max_share =
      cfg.get_double("dataset", "tail_max_share", thresholds.tail_max_share);
  Dataset ds = generate(spec);
  GroupAssignment groups =
      assign_groups(ds.train, spec.predicate_classes, thresholds);
  save_dataset(ds, groups, ctx.out_dir);
  std::printf("scenes: train %zu, eval %zu, test %zu\n", ds.train.size(),
              ds.eval.size(), ds.test.size());
  for (Group g : {Group::Head, Group::Body, Group::Tail}) {
    std::printf("%s:", to_string(g));
    for (int c : groups.classes_in(g)) std::printf(" %d", c);
    std::printf("\n");
  }
  detail::finish_run(ctx, cfg, "gen",
                     {"train.jsonl", "eval.jsonl", "test.jsonl",
                      "dataset_manifest.json"});
  return 0;
}

// ---------------------------------------------------------------------------
// infer: exact | sum_product | max_product | mean_field on a graph file
// ---------------------------------------------------------------------------

inline int cmd_infer(RunConfig cfg, const RunContext& ctx) {
  detail::ensure_out_dir(ctx);
  const std::string graph_path = cfg.require_string("infer", "graph");
  const std::string method = cfg.get_string("infer", "method", "exact");
  FactorGraph g = FactorGraph::load(graph_path);

  Json result;
  if (method == "exact") {
    EnumerationOptions opt;
    opt.max_states = cfg.get_u64("exact", "max_states", opt.max_states);
    ExactResult r = enumerate_all(g, opt);
    result = exact_result_to_json(r);
  } else if (method == "sum_product" || method == "max_product") {
    BpConfig bp;
    bp.semiring =
        method == "sum_product" ? Semiring::SumProduct : Semiring::MaxProduct;
    const std::string schedule = cfg.get_string("bp", "schedule", "synchronous");
    if (schedule == "synchronous") bp.schedule = Schedule::Synchronous;
    else if (schedule == "sequential") bp.schedule = Schedule::Sequential;
    else throw ValidationError("unknown schedule \"" + schedule + "\"");
    bp.damping = cfg.get_double("bp", "damping", g.is_tree() ? 0.0 : 0.5);
    bp.max_iterations =
        static_cast<int>(cfg.get_int("bp", "max_iterations", bp.max_iterations));
    bp.tolerance = cfg.get_double("bp", "tolerance", bp.tolerance);
    bp.max_factor_arity =
        cfg.get_u64("bp", "max_factor_arity", bp.max_factor_arity);
    BpResult r = run_bp(g, bp);
    result = bp_result_to_json(r);
    std::printf("%s: converged=%s iterations=%d\n", method.c_str(),
                r.converged ? "true" : "false", r.iterations_used);
  } else if (method == "mean_field") {
    const int max_iterations =
        static_cast<int>(cfg.get_int("bp", "max_iterations", 500));
    const double tolerance = cfg.get_double("bp", "tolerance", 1e-8);
    MeanFieldResult r = mean_field(g, max_iterations, tolerance);
    result = Json::object();
    Json beliefs = Json::array();
    for (const auto& b : r.beliefs) beliefs.push(Json::number_array(b));
    result.set("beliefs", std::move(beliefs));
    result.set("converged", Json::boolean(r.converged));
    result.set("iterations_used", Json::integer(r.iterations_used));
    std::vector<int> decoded;
    for (const auto& b : r.beliefs) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < b.size(); ++s)
        if (b[s] > b[best]) best = s;
      decoded.push_back(static_cast<int>(best));
    }
    result.set("map_decode", Json::integer_array(decoded));
  } else {
    throw ValidationError(
        "unknown method \"" + method +
        "\" (exact | sum_product | max_product | mean_field)");
  }
  result.set("method", Json::string(method));
  detail::write_file(ctx.out_dir + "/result.json", result.dump(2) + "\n");
  detail::finish_run(ctx, cfg, "infer", {"result.json"});
  return 0;
}

// ---------------------------------------------------------------------------
// train: dataset dir -> checkpoint + loss curve
// ---------------------------------------------------------------------------

inline int cmd_train(RunConfig cfg, const RunContext& ctx) {
  detail::ensure_out_dir(ctx);
  const std::string dataset_dir = cfg.require_string("train", "dataset");
  Dataset ds = load_dataset(dataset_dir);
  TrainConfig tc = detail::train_config_from(cfg, ctx);
  NbpWidths widths = detail::widths_from(cfg, ds.spec, tc.task);
  const std::size_t layers = cfg.get_u64(
      "nbp", "layers", detail::default_layers(tc.task));
  NbpStack stack =
      init_params(widths, layers, tc.aggregator, tc.higher_order, ctx.seed);
  TrainResult tr = train(ds.train, ds.spec, std::move(stack), tc);
  save_checkpoint(tr.stack, ctx.out_dir + "/checkpoint.json");
  detail::write_file(ctx.out_dir + "/loss_curve.csv",
                     loss_curve_to_csv(tr.loss_curve));
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(tr.stream_hash));
  Json summary = Json::object();
  summary.set("epochs", Json::integer(static_cast<long long>(tr.loss_curve.size())));
  summary.set("final_loss",
              Json::number(tr.loss_curve.empty() ? 0.0 : tr.loss_curve.back()));
  summary.set("skipped_scenes", Json::integer(tr.skipped_scenes));
  summary.set("stream_hash", Json::string(hash));
  detail::write_file(ctx.out_dir + "/train_summary.json", summary.dump(2) + "\n");
  std::printf("trained %zu epochs, final loss %.6f\n", tr.loss_curve.size(),
              tr.loss_curve.empty() ? 0.0 : tr.loss_curve.back());
  detail::finish_run(ctx, cfg, "train",
                     {"checkpoint.json", "loss_curve.csv", "train_summary.json"});
  return 0;
}

// ---------------------------------------------------------------------------
// eval: dataset + checkpoint -> report
// ---------------------------------------------------------------------------

inline int cmd_eval(RunConfig cfg, const RunContext& ctx) {
  detail::ensure_out_dir(ctx);
  const std::string dataset_dir = cfg.require_string("eval", "dataset");
  const std::string checkpoint_path = cfg.require_string("eval", "checkpoint");
  const std::string split_name = cfg.get_string("eval", "split", "test");
  const SggTask task = detail::task_from(cfg.get_string("eval", "task", "predcls"));
  const std::vector<int> ks = cfg.get_int_list("eval", "ks", {20, 50, 100});

  Dataset ds = load_dataset(dataset_dir);
  const std::vector<SceneSample>* split = nullptr;
  if (split_name == "eval") split = &ds.eval;
  else if (split_name == "test") split = &ds.test;
  else if (split_name == "train") split = &ds.train;
  else throw ValidationError("unknown split \"" + split_name + "\"");

  NbpStack stack = load_checkpoint(checkpoint_path);
  const std::size_t want_input =
      static_cast<std::size_t>(ds.spec.feature_dim) +
      (task == SggTask::PredCls
           ? static_cast<std::size_t>(ds.spec.instance_classes)
           : 0);
  if (stack.widths.input != want_input ||
      stack.widths.instance_classes !=
          static_cast<std::size_t>(ds.spec.instance_classes) ||
      stack.widths.predicate_classes !=
          static_cast<std::size_t>(ds.spec.predicate_classes) + 1)
    throw CheckpointError("checkpoint widths do not match dataset \"" +
                          dataset_dir + "\" with task " +
                          std::string(to_string(task)));

  GroupAssignment groups =
      assign_groups(ds.train, ds.spec.predicate_classes,
                    detail::thresholds_from_dataset_dir(dataset_dir));
  auto preds = predict(*split, stack, task, ds.spec.instance_classes);
  EvalReport report =
      evaluate(preds, *split, ks, groups, ds.spec.predicate_classes);
  Json doc = eval_report_to_json(report);
  doc.set("split", Json::string(split_name));
  doc.set("task", Json::string(to_string(task)));
  detail::write_file(ctx.out_dir + "/report.json", doc.dump(2) + "\n");
  detail::write_file(ctx.out_dir + "/report.csv", eval_report_to_csv(report));
  for (int k : ks)
    std::printf("R@%d %.4f  mR@%d %.4f\n", k, report.recall_at_k.at(k), k,
                report.mean_recall_at_k.at(k));
  detail::finish_run(ctx, cfg, "eval", {"report.json", "report.csv"});
  return 0;
}

// ---------------------------------------------------------------------------
// ablate: 4 arms, one data stream, one table
// ---------------------------------------------------------------------------

inline int cmd_ablate(RunConfig cfg, const RunContext& ctx) {
  detail::ensure_out_dir(ctx);
  const std::string dataset_dir = cfg.require_string("ablate", "dataset");
  const std::vector<int> ks = cfg.get_int_list("ablate", "ks", {20, 50, 100});
  Dataset ds = load_dataset(dataset_dir);
  TrainConfig tc = detail::train_config_from(cfg, ctx);
  NbpWidths widths = detail::widths_from(cfg, ds.spec, tc.task);
  const std::size_t layers =
      cfg.get_u64("nbp", "layers", detail::default_layers(tc.task));

  AblationTable table = run_ablation(ds, widths, layers, tc, ks);
  Json doc = ablation_to_json(table);
  // mean-vs-max and with/without-higher-order comparisons, reported only
  if (table.arms.size() == 4 && !table.aborted) {
    Json cmp = Json::object();
    for (int k : ks) {
      Json at_k = Json::object();
      at_k.set("mean_minus_max_with_ho",
               Json::number(table.arms[0].report.mean_recall_at_k.at(k) -
                            table.arms[2].report.mean_recall_at_k.at(k)));
      at_k.set("with_minus_without_ho_mean",
               Json::number(table.arms[0].report.mean_recall_at_k.at(k) -
                            table.arms[1].report.mean_recall_at_k.at(k)));
      cmp.set(std::to_string(k), std::move(at_k));
    }
    doc.set("comparisons", std::move(cmp));
  }
  detail::write_file(ctx.out_dir + "/ablation.json", doc.dump(2) + "\n");
  detail::write_file(ctx.out_dir + "/ablation.csv", ablation_to_csv(table));
  for (const AblationArm& arm : table.arms) {
    if (arm.completed)
      std::printf("%s %s: mR@%d %.4f\n", to_string(arm.aggregator),
                  arm.higher_order ? "with_ho" : "without_ho", ks.back(),
                  arm.report.mean_recall_at_k.at(ks.back()));
    else
      std::fprintf(stderr, "%s %s: FAILED: %s\n", to_string(arm.aggregator),
                   arm.higher_order ? "with_ho" : "without_ho",
                   arm.error.c_str());
  }
  detail::finish_run(ctx, cfg, "ablate", {"ablation.json", "ablation.csv"});
  if (table.aborted) throw ValidationError("ablation aborted; partial results kept");
  return 0;
}

}  // namespace fgbp::cli
