#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fgbp/error.hpp"
#include "fgbp/json_out.hpp"
#include "fgbp/neural_bp.hpp"
#include "fgbp/synthetic_sgg.hpp"
#include "fgbp/tensor.hpp"

namespace fgbp {

enum class Optimizer { Sgd, Adam };

inline const char* to_string(Optimizer o) {
  return o == Optimizer::Sgd ? "sgd" : "adam";
}

struct TrainConfig {
  Optimizer optimizer = Optimizer::Adam;
  // Unset: SGD follows the 0.008 x batch-size rule, Adam runs at 1e-4.
  std::optional<double> learning_rate;
  int batch_size = 4;
  int epochs = 10;
  std::uint64_t seed = 1;
  SggTask task = SggTask::PredCls;
  Aggregator aggregator = Aggregator::Mean;
  bool higher_order = true;
  SamplerConfig sampler;
  int threads = 1;
  // Relative weight of background (no-relation) pairs inside the predicate
  // cross entropy. Candidate pair sets are background-heavy; full weight
  // would teach the model to rank background above every real predicate and
  // empty the triplet ranking.
  double background_weight = 0.2;
  // Global-norm gradient clip; 0 disables. The Q(t) M(x) product layers can
  // spike gradients early in training.
  double grad_clip = 5.0;

  double resolved_learning_rate() const {
    if (learning_rate) return *learning_rate;
    return optimizer == Optimizer::Sgd ? 0.008 * batch_size : 1e-4;
  }

  void validate() const {
    if (learning_rate && *learning_rate < 0.0)
      throw ValidationError("TrainConfig: learning_rate must be >= 0");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
    if (threads < 1) throw ValidationError("TrainConfig: threads must be >= 1");
    if (background_weight <= 0.0 || background_weight > 1.0)
      throw ValidationError("TrainConfig: background_weight must be in (0, 1]");
    if (grad_clip < 0.0)
      throw ValidationError("TrainConfig: grad_clip must be >= 0");
    sampler.validate();
  }
};

// ---------------------------------------------------------------------------
// Prepared scenes: factor graph + feature view built once per split
// ---------------------------------------------------------------------------

struct PreparedScene {
  SceneGraphData data;
  NbpGraphView view;
};

struct PreparedSplit {
  std::vector<std::optional<PreparedScene>> scenes;  // aligned with the split
  int skipped = 0;
};

inline PreparedSplit prepare_scenes(const std::vector<SceneSample>& split,
                                    SggTask task, int instance_classes) {
  PreparedSplit out;
  for (const SceneSample& s : split) {
    auto data = scene_to_factor_graph(s, task, instance_classes);
    if (!data) {
      out.scenes.push_back(std::nullopt);
      ++out.skipped;
      continue;
    }
    NbpGraphView view = make_nbp_view(data->graph);
    out.scenes.push_back(PreparedScene{std::move(*data), std::move(view)});
  }
  return out;
}

namespace detail {

// instance cross entropy (where supervised) + predicate cross entropy over
// the candidate pairs that are still supervised under the copy mask, with
// background pairs downweighted
inline Var scene_loss(const PreparedScene& ps, const NbpStack& stack,
                      const std::vector<bool>* copy_mask, bool track,
                      LiftedStack* leaves_out, double background_weight = 0.2) {
  NbpForwardResult fwd = nbp_forward(ps.view, stack, track);
  std::vector<std::size_t> pred_targets(ps.data.predicate_targets.size());
  std::vector<double> weights(ps.data.predicate_targets.size(), 1.0);
  for (std::size_t i = 0; i < pred_targets.size(); ++i) {
    pred_targets[i] = static_cast<std::size_t>(ps.data.predicate_targets[i]);
    if (pred_targets[i] == 0) weights[i] = background_weight;
  }
  std::vector<bool> active = ps.data.predicate_supervised;
  if (copy_mask) {
    // copy_mask arrives already expanded onto the pair grid
    for (std::size_t i = 0; i < active.size() && i < copy_mask->size(); ++i)
      active[i] = active[i] && (*copy_mask)[i];
  }
  bool any_active = false;
  for (bool b : active) any_active |= b;

  Var loss;
  if (any_active)
    loss = softmax_cross_entropy_rows(fwd.predicate_logits, pred_targets,
                                      active, weights);
  if (ps.data.instance_supervised) {
    std::vector<std::size_t> inst(ps.data.instance_targets.size());
    for (std::size_t i = 0; i < inst.size(); ++i)
      inst[i] = static_cast<std::size_t>(ps.data.instance_targets[i]);
    Var li = softmax_cross_entropy_rows(fwd.variable_logits, inst);
    loss = loss ? add(loss, li) : li;
  }
  if (!loss) loss = constant(Tensor::scalar(0.0));
  if (leaves_out) *leaves_out = std::move(fwd.params);
  return loss;
}

// per-pair supervision mask for one stream copy: expands the per-edge mask
// onto the pair grid (pairs without a labeled edge stay supervised background)
inline std::vector<bool> expand_mask(const SceneSample& scene,
                                     const PreparedScene& ps,
                                     const std::vector<bool>& edge_mask) {
  std::vector<bool> mask(ps.data.predicate_targets.size(), true);
  std::map<std::pair<int, int>, std::size_t> pos;
  for (std::size_t p = 0; p < ps.data.factor_pairs.size(); ++p)
    pos[ps.data.factor_pairs[p]] = p;
  for (std::size_t e = 0; e < scene.edges.size() && e < edge_mask.size(); ++e) {
    if (edge_mask[e]) continue;
    auto it = pos.find({scene.edges[e].subject, scene.edges[e].object});
    if (it != pos.end()) mask[it->second] = false;
  }
  return mask;
}

struct AdamState {
  std::map<std::string, Tensor> m, v;
  long long step = 0;
};

inline void apply_update(NbpStack& stack,
                         const std::map<std::string, Tensor>& grads,
                         const TrainConfig& cfg, AdamState& adam) {
  const double lr = cfg.resolved_learning_rate();
  if (cfg.optimizer == Optimizer::Sgd) {
    for_each_param(stack, [&](const std::string& name, Tensor& t) {
      const Tensor& g = grads.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] -= lr * g[i];
    });
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  adam.step++;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
  for_each_param(stack, [&](const std::string& name, Tensor& t) {
    const Tensor& g = grads.at(name);
    Tensor& m = adam.m.try_emplace(name, Tensor::zeros(t.shape())).first->second;
    Tensor& v = adam.v.try_emplace(name, Tensor::zeros(t.shape())).first->second;
    for (std::size_t i = 0; i < t.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      t[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  });
}

}  // namespace detail

struct TrainResult {
  NbpStack stack;
  std::vector<double> loss_curve;   // one mean loss per epoch
  std::uint64_t stream_hash = 0;    // all epochs' streams combined
  int skipped_scenes = 0;
};

// Cross-entropy training over resampled epoch streams. Deterministic for a
// fixed (config, seed) in single-threaded mode; with threads > 1 the
// per-batch reduction still runs in item order, chunked per thread.
inline TrainResult train(const std::vector<SceneSample>& split,
                         const DatasetSpec& spec, NbpStack stack,
                         const TrainConfig& cfg) {
  cfg.validate();
  PreparedSplit prepared = prepare_scenes(split, cfg.task, spec.instance_classes);
  TrainResult out;
  out.skipped_scenes = prepared.skipped;
  detail::AdamState adam;
  std::uint64_t combined_hash = 1469598103934665603ULL;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<StreamItem> stream =
        resample(split, cfg.sampler, Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)),
                 spec.predicate_classes);
    combined_hash ^= stream_hash(stream) + 0x9e3779b97f4a7c15ULL +
                     (combined_hash << 6) + (combined_hash >> 2);
    double epoch_loss = 0.0;
    std::size_t epoch_items = 0;

    for (std::size_t start = 0; start < stream.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          stream.size(), start + static_cast<std::size_t>(cfg.batch_size));
      struct ItemResult {
        double loss = 0.0;
        bool used = false;
        std::vector<std::pair<std::string, Tensor>> grads;
      };
      std::vector<ItemResult> results(stop - start);

      auto run_item = [&](std::size_t slot) {
        const StreamItem& item = stream[start + slot];
        const auto& maybe = prepared.scenes[static_cast<std::size_t>(item.scene_index)];
        if (!maybe) return;
        const SceneSample& scene = split[static_cast<std::size_t>(item.scene_index)];
        const std::vector<bool> mask =
            detail::expand_mask(scene, *maybe, item.edge_mask);
        LiftedStack leaves;
        Var loss = detail::scene_loss(*maybe, stack, &mask, true, &leaves,
                                      cfg.background_weight);
        if (!std::isfinite(loss->value[0]))
          throw ValidationError("train: non-finite loss at epoch " +
                                std::to_string(epoch) + ", scene " +
                                std::to_string(scene.id));
        backward(loss);
        ItemResult r;
        r.loss = loss->value[0];
        r.used = true;
        for (const auto& [name, var] : leaves.named)
          r.grads.push_back({name, var->grad_ready
                                       ? var->grad
                                       : Tensor::zeros(var->value.shape())});
        results[slot] = std::move(r);
      };

      if (cfg.threads <= 1 || results.size() <= 1) {
        for (std::size_t slot = 0; slot < results.size(); ++slot) run_item(slot);
      } else {
        std::vector<std::thread> workers;
        std::size_t per = (results.size() + static_cast<std::size_t>(cfg.threads) - 1) /
                          static_cast<std::size_t>(cfg.threads);
        for (int t = 0; t < cfg.threads; ++t) {
          const std::size_t lo = static_cast<std::size_t>(t) * per;
          const std::size_t hi = std::min(results.size(), lo + per);
          if (lo >= hi) break;
          workers.emplace_back([&, lo, hi]() {
            for (std::size_t slot = lo; slot < hi; ++slot) run_item(slot);
          });
        }
        for (auto& w : workers) w.join();
      }

      std::map<std::string, Tensor> grads;
      std::size_t used = 0;
      for (const ItemResult& r : results) {
        if (!r.used) continue;
        ++used;
        epoch_loss += r.loss;
        for (const auto& [name, g] : r.grads) {
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, g);
          } else {
            Tensor& acc = it->second;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
          }
        }
      }
      if (used == 0) continue;
      epoch_items += used;
      double sq_norm = 0.0;
      for (auto& [name, g] : grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] /= static_cast<double>(used);
          if (!std::isfinite(g[i]))
            throw ValidationError("train: non-finite gradient in " + name);
          sq_norm += g[i] * g[i];
        }
      }
      if (cfg.grad_clip > 0.0 && sq_norm > cfg.grad_clip * cfg.grad_clip) {
        const double scale = cfg.grad_clip / std::sqrt(sq_norm);
        for (auto& [name, g] : grads)
          for (std::size_t i = 0; i < g.size(); ++i) g[i] *= scale;
      }
      detail::apply_update(stack, grads, cfg, adam);
    }
    out.loss_curve.push_back(epoch_items ? epoch_loss / static_cast<double>(epoch_items)
                                         : 0.0);
  }
  out.stream_hash = combined_hash;
  out.stack = std::move(stack);
  return out;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation
// ---------------------------------------------------------------------------

struct TripletPrediction {
  int subject = 0;
  int object = 0;
  int subject_label = 0;
  int predicate = 0;
  int object_label = 0;
  double score = 0.0;
};

namespace detail {
inline std::vector<double> softmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.cols();
  double mx = logits.at(row, 0);
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, logits.at(row, i));
  std::vector<double> p(c);
  double z = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    p[i] = std::exp(logits.at(row, i) - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}
}  // namespace detail

// Per pair: triplet (subject label, predicate, object label) scored by the
// product of the three softmax probabilities, ranked per scene. A pair whose
// background probability strictly dominates every real predicate is excluded;
// predicate ties resolve to the lowest real class.
inline std::vector<std::vector<TripletPrediction>> predict(
    const std::vector<SceneSample>& split, const NbpStack& stack, SggTask task,
    int instance_classes) {
  PreparedSplit prepared = prepare_scenes(split, task, instance_classes);
  std::vector<std::vector<TripletPrediction>> out(split.size());
  for (std::size_t s = 0; s < split.size(); ++s) {
    if (!prepared.scenes[s]) continue;
    const PreparedScene& ps = *prepared.scenes[s];
    NbpForwardResult fwd = nbp_forward(ps.view, stack, false);
    const Tensor& vl = fwd.variable_logits->value;
    const Tensor& pl = fwd.predicate_logits->value;
    // entity labels: ground truth for predcls, argmax elsewhere
    std::vector<int> labels(ps.view.n_vars);
    std::vector<double> label_prob(ps.view.n_vars, 1.0);
    for (std::size_t i = 0; i < ps.view.n_vars; ++i) {
      if (task == SggTask::PredCls) {
        labels[i] = split[s].entities[i].label;
      } else {
        const std::vector<double> p = detail::softmax_row(vl, i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.size(); ++c)
          if (p[c] > p[best]) best = c;
        labels[i] = static_cast<int>(best);
        label_prob[i] = p[best];
      }
    }
    std::vector<TripletPrediction> preds;
    for (std::size_t p = 0; p < ps.data.factor_pairs.size(); ++p) {
      const auto [si, oi] = ps.data.factor_pairs[p];
      const std::vector<double> probs = detail::softmax_row(pl, p);
      std::size_t best = 1;
      for (std::size_t k = 2; k < probs.size(); ++k)
        if (probs[k] > probs[best]) best = k;
      // background wins only strictly
      if (probs[0] > probs[best]) continue;
      TripletPrediction t;
      t.subject = si;
      t.object = oi;
      t.subject_label = labels[static_cast<std::size_t>(si)];
      t.object_label = labels[static_cast<std::size_t>(oi)];
      t.predicate = static_cast<int>(best);
      t.score = probs[best] * label_prob[static_cast<std::size_t>(si)] *
                label_prob[static_cast<std::size_t>(oi)];
      preds.push_back(t);
    }
    // rank by score; stable sort keeps the canonical pair order on ties
    std::stable_sort(preds.begin(), preds.end(),
                     [](const TripletPrediction& a, const TripletPrediction& b) {
                       return a.score > b.score;
                     });
    out[s] = std::move(preds);
  }
  return out;
}

struct EvalReport {
  std::vector<int> ks;
  std::map<int, double> recall_at_k;
  std::map<int, double> mean_recall_at_k;
  std::map<Group, double> group_recall;      // at the largest K
  std::vector<double> per_predicate_recall;  // at the largest K; [0] unused
  std::vector<int> excluded_predicates;      // zero ground-truth instances
  long long gt_triplets = 0;
};

// R@K micro-averaged over scenes; per-predicate recalls restricted to each
// class's ground truth; mR@K the unweighted mean over classes that appear.
inline EvalReport evaluate(
    const std::vector<std::vector<TripletPrediction>>& predictions,
    const std::vector<SceneSample>& split, std::vector<int> ks,
    const GroupAssignment& groups, int predicate_classes) {
  if (predictions.size() != split.size())
    throw ValidationError("evaluate: predictions do not align with the split");
  if (ks.empty()) throw ValidationError("evaluate: no K values");
  std::sort(ks.begin(), ks.end());
  EvalReport report;
  report.ks = ks;
  const std::size_t P = static_cast<std::size_t>(predicate_classes);

  std::vector<long long> gt_per_class(P + 1, 0);
  for (const SceneSample& s : split)
    for (const PredicateEdge& e : s.edges) {
      if (e.label < 1 || static_cast<std::size_t>(e.label) > P)
        throw ValidationError("evaluate: ground-truth label out of range");
      gt_per_class[static_cast<std::size_t>(e.label)]++;
      report.gt_triplets++;
    }

  for (int k_value : ks) {
    long long recalled_total = 0;
    std::vector<long long> recalled_per_class(P + 1, 0);
    for (std::size_t s = 0; s < split.size(); ++s) {
      const auto& preds = predictions[s];
      const std::size_t top =
          std::min(preds.size(), static_cast<std::size_t>(k_value));
      for (const PredicateEdge& e : split[s].edges) {
        const int s_label =
            split[s].entities[static_cast<std::size_t>(e.subject)].label;
        const int o_label =
            split[s].entities[static_cast<std::size_t>(e.object)].label;
        bool hit = false;
        for (std::size_t i = 0; i < top && !hit; ++i) {
          const TripletPrediction& t = preds[i];
          hit = t.subject == e.subject && t.object == e.object &&
                t.predicate == e.label && t.subject_label == s_label &&
                t.object_label == o_label;
        }
        if (hit) {
          recalled_total++;
          recalled_per_class[static_cast<std::size_t>(e.label)]++;
        }
      }
    }
    report.recall_at_k[k_value] =
        report.gt_triplets ? static_cast<double>(recalled_total) /
                                 static_cast<double>(report.gt_triplets)
                           : 0.0;
    double sum = 0.0;
    int n_classes = 0;
    std::vector<double> per_class(P + 1, 0.0);
    for (std::size_t c = 1; c <= P; ++c) {
      if (gt_per_class[c] == 0) continue;
      per_class[c] = static_cast<double>(recalled_per_class[c]) /
                     static_cast<double>(gt_per_class[c]);
      sum += per_class[c];
      ++n_classes;
    }
    report.mean_recall_at_k[k_value] = n_classes ? sum / n_classes : 0.0;
    if (k_value == ks.back()) {
      report.per_predicate_recall = per_class;
      for (Group g : {Group::Head, Group::Body, Group::Tail}) {
        double gsum = 0.0;
        int gcount = 0;
        for (int c : groups.classes_in(g)) {
          if (gt_per_class[static_cast<std::size_t>(c)] == 0) continue;
          gsum += per_class[static_cast<std::size_t>(c)];
          ++gcount;
        }
        report.group_recall[g] = gcount ? gsum / gcount : 0.0;
      }
    }
  }
  for (std::size_t c = 1; c <= P; ++c)
    if (gt_per_class[c] == 0)
      report.excluded_predicates.push_back(static_cast<int>(c));
  return report;
}

// ---------------------------------------------------------------------------
// Frequency-prior baseline: always predict each pair's most frequent train
// predicate given the (subject class, object class) key. Operates on ground
// truth entity labels, i.e. the PredCls setting.
// ---------------------------------------------------------------------------

class FrequencyPrior {
 public:
  FrequencyPrior(const std::vector<SceneSample>& train, int instance_classes,
                 int predicate_classes)
      : C_(instance_classes), P_(predicate_classes) {
    counts_.assign(static_cast<std::size_t>(C_) * static_cast<std::size_t>(C_),
                   std::vector<long long>(static_cast<std::size_t>(P_) + 1, 0));
    global_.assign(static_cast<std::size_t>(P_) + 1, 0);
    for (const SceneSample& s : train)
      for (const PredicateEdge& e : s.edges) {
        const int sc = s.entities[static_cast<std::size_t>(e.subject)].label;
        const int oc = s.entities[static_cast<std::size_t>(e.object)].label;
        counts_[key(sc, oc)][static_cast<std::size_t>(e.label)]++;
        global_[static_cast<std::size_t>(e.label)]++;
      }
  }

  std::vector<std::vector<TripletPrediction>> predict(
      const std::vector<SceneSample>& split) const {
    std::vector<std::vector<TripletPrediction>> out(split.size());
    for (std::size_t s = 0; s < split.size(); ++s) {
      const SceneSample& scene = split[s];
      std::vector<TripletPrediction> preds;
      const int n = static_cast<int>(scene.entities.size());
      for (int si = 0; si < n; ++si)
        for (int oi = 0; oi < n; ++oi) {
          if (si == oi) continue;
          const int sc = scene.entities[static_cast<std::size_t>(si)].label;
          const int oc = scene.entities[static_cast<std::size_t>(oi)].label;
          const std::vector<long long>& c = counts_[key(sc, oc)];
          long long total = 0;
          for (int k = 1; k <= P_; ++k) total += c[static_cast<std::size_t>(k)];
          const std::vector<long long>& use = total > 0 ? c : global_;
          long long use_total = 0;
          std::size_t best = 1;
          for (int k = 1; k <= P_; ++k) {
            use_total += use[static_cast<std::size_t>(k)];
            if (use[static_cast<std::size_t>(k)] > use[best])
              best = static_cast<std::size_t>(k);
          }
          if (use_total == 0) continue;
          TripletPrediction t;
          t.subject = si;
          t.object = oi;
          t.subject_label = sc;
          t.object_label = oc;
          t.predicate = static_cast<int>(best);
          t.score = static_cast<double>(use[best]) /
                    static_cast<double>(use_total);
          preds.push_back(t);
        }
      std::stable_sort(preds.begin(), preds.end(),
                       [](const TripletPrediction& a, const TripletPrediction& b) {
                         return a.score > b.score;
                       });
      out[s] = std::move(preds);
    }
    return out;
  }

 private:
  std::size_t key(int sc, int oc) const {
    return static_cast<std::size_t>(sc) * static_cast<std::size_t>(C_) +
           static_cast<std::size_t>(oc);
  }
  int C_, P_;
  std::vector<std::vector<long long>> counts_;
  std::vector<long long> global_;
};

// ---------------------------------------------------------------------------
// Ablation: {mean, max} x {with, without higher-order} under identical seeds
// and data streams
// ---------------------------------------------------------------------------

struct AblationArm {
  Aggregator aggregator = Aggregator::Mean;
  bool higher_order = true;
  bool completed = false;
  std::string error;
  std::uint64_t stream_hash = 0;
  std::vector<double> loss_curve;
  EvalReport report;
};

struct AblationTable {
  std::vector<AblationArm> arms;
  std::vector<int> ks;
  bool aborted = false;
};

inline AblationTable run_ablation(const Dataset& ds, const NbpWidths& widths,
                                  std::size_t n_layers, const TrainConfig& base,
                                  const std::vector<int>& ks) {
  AblationTable table;
  table.ks = ks;
  GroupAssignment groups = assign_groups(ds.train, ds.spec.predicate_classes);
  const std::vector<std::pair<Aggregator, bool>> arms{
      {Aggregator::Mean, true},
      {Aggregator::Mean, false},
      {Aggregator::Max, true},
      {Aggregator::Max, false}};
  for (const auto& [agg, ho] : arms) {
    AblationArm arm;
    arm.aggregator = agg;
    arm.higher_order = ho;
    try {
      TrainConfig cfg = base;
      cfg.aggregator = agg;
      cfg.higher_order = ho;
      NbpStack stack = init_params(widths, n_layers, agg, ho, cfg.seed);
      TrainResult tr = train(ds.train, ds.spec, std::move(stack), cfg);
      arm.stream_hash = tr.stream_hash;
      arm.loss_curve = tr.loss_curve;
      auto preds = predict(ds.test, tr.stack, cfg.task, ds.spec.instance_classes);
      arm.report = evaluate(preds, ds.test, ks, groups, ds.spec.predicate_classes);
      arm.completed = true;
      table.arms.push_back(std::move(arm));
    } catch (const Error& e) {
      arm.error = e.what();
      table.arms.push_back(std::move(arm));
      table.aborted = true;
      break;  // partial results preserved
    }
  }
  // identical data streams across completed arms
  for (const AblationArm& arm : table.arms)
    if (arm.completed && arm.stream_hash != table.arms.front().stream_hash)
      throw ValidationError("run_ablation: arms saw different data streams");
  return table;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline Json eval_report_to_json(const EvalReport& r) {
  Json doc = Json::object();
  Json ks = Json::array();
  for (int k : r.ks) ks.push(Json::integer(k));
  doc.set("ks", std::move(ks));
  Json recall = Json::object();
  for (const auto& [k, v] : r.recall_at_k)
    recall.set(std::to_string(k), Json::number(v));
  doc.set("recall_at_k", std::move(recall));
  Json mean_recall = Json::object();
  for (const auto& [k, v] : r.mean_recall_at_k)
    mean_recall.set(std::to_string(k), Json::number(v));
  doc.set("mean_recall_at_k", std::move(mean_recall));
  Json group = Json::object();
  for (const auto& [g, v] : r.group_recall)
    group.set(to_string(g), Json::number(v));
  doc.set("group_recall", std::move(group));
  Json per_class = Json::array();
  for (std::size_t c = 1; c < r.per_predicate_recall.size(); ++c)
    per_class.push(Json::number(r.per_predicate_recall[c]));
  doc.set("per_predicate_recall", std::move(per_class));
  doc.set("excluded_predicates", Json::integer_array(r.excluded_predicates));
  doc.set("gt_triplets", Json::integer(r.gt_triplets));
  return doc;
}

inline std::string eval_report_to_csv(const EvalReport& r) {
  std::string csv = "metric,k,value\n";
  char buf[64];
  for (int k : r.ks) {
    std::snprintf(buf, sizeof(buf), "recall,%d,%.17g\n", k, r.recall_at_k.at(k));
    csv += buf;
  }
  for (int k : r.ks) {
    std::snprintf(buf, sizeof(buf), "mean_recall,%d,%.17g\n", k,
                  r.mean_recall_at_k.at(k));
    csv += buf;
  }
  for (const auto& [g, v] : r.group_recall) {
    std::snprintf(buf, sizeof(buf), "group_recall_%s,%d,%.17g\n", to_string(g),
                  r.ks.back(), v);
    csv += buf;
  }
  return csv;
}

inline Json ablation_to_json(const AblationTable& t) {
  Json doc = Json::object();
  doc.set("aborted", Json::boolean(t.aborted));
  Json arms = Json::array();
  for (const AblationArm& arm : t.arms) {
    Json a = Json::object();
    a.set("aggregator", Json::string(to_string(arm.aggregator)));
    a.set("completed", Json::boolean(arm.completed));
    if (!arm.error.empty()) a.set("error", Json::string(arm.error));
    a.set("higher_order", Json::boolean(arm.higher_order));
    if (arm.completed) {
      a.set("final_loss", Json::number(arm.loss_curve.empty()
                                           ? 0.0
                                           : arm.loss_curve.back()));
      a.set("report", eval_report_to_json(arm.report));
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%016llx",
                    static_cast<unsigned long long>(arm.stream_hash));
      a.set("stream_hash", Json::string(buf));
    }
    arms.push(std::move(a));
  }
  doc.set("arms", std::move(arms));
  Json ks = Json::array();
  for (int k : t.ks) ks.push(Json::integer(k));
  doc.set("ks", std::move(ks));
  return doc;
}

inline std::string ablation_to_csv(const AblationTable& t) {
  std::string csv = "aggregator,higher_order";
  for (int k : t.ks) csv += ",mean_recall@" + std::to_string(k);
  csv += ",group_head,group_body,group_tail\n";
  char buf[64];
  for (const AblationArm& arm : t.arms) {
    if (!arm.completed) continue;
    csv += to_string(arm.aggregator);
    csv += arm.higher_order ? ",with_ho" : ",without_ho";
    for (int k : t.ks) {
      std::snprintf(buf, sizeof(buf), ",%.17g", arm.report.mean_recall_at_k.at(k));
      csv += buf;
    }
    for (Group g : {Group::Head, Group::Body, Group::Tail}) {
      auto it = arm.report.group_recall.find(g);
      std::snprintf(buf, sizeof(buf), ",%.17g",
                    it == arm.report.group_recall.end() ? 0.0 : it->second);
      csv += buf;
    }
    csv += "\n";
  }
  return csv;
}

inline std::string loss_curve_to_csv(const std::vector<double>& curve) {
  std::string csv = "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, curve[i]);
    csv += buf;
  }
  return csv;
}

}  // namespace fgbp
