#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fgbp/error.hpp"
#include "fgbp/factor_graph.hpp"
#include "fgbp/json_out.hpp"
#include "fgbp/rng.hpp"
#include "fgbp/tensor.hpp"

namespace fgbp {

// ---------------------------------------------------------------------------
// Scenes. Predicate class 0 is the implicit no-relation (background) label;
// generated edges carry labels 1..predicate_classes.
// ---------------------------------------------------------------------------

struct Entity {
  Tensor feature;
  int label = 0;
};

struct PredicateEdge {
  int subject = 0;
  int object = 0;
  int label = 0;
  // Cleared by the resampler on dropped copies; unsupervised edges are
  // excluded from the loss rather than treated as background.
  bool supervised = true;
};

struct SceneSample {
  int id = 0;
  std::vector<Entity> entities;
  std::vector<PredicateEdge> edges;
};

struct DatasetSpec {
  int instance_classes = 10;
  int predicate_classes = 12;  // real classes; background 0 is extra
  int entities_min = 3;
  int entities_max = 6;
  int scenes = 800;  // total; split 70/30 with 5% of train carved for eval
  double zipf_exponent = 1.5;
  int feature_dim = 16;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;
  // Generator internals: a per-scene latent context shifts every entity
  // feature and selects which predicate dominates each pair of class GROUPS
  // (classes collapse mod key_classes), so the conditional table is dense
  // enough to learn from a desk-scale split. Context is what the global
  // factor can pick up; a frequency prior keyed on classes cannot express it.
  int context_classes = 4;
  double context_scale = 0.5;
  int key_classes = 4;
  double relation_density = 0.35;
  double dominant_weight = 0.8;

  void validate() const {
    if (instance_classes < 1 || predicate_classes < 1)
      throw ValidationError("DatasetSpec: class counts must be positive");
    if (entities_min < 2 || entities_max < entities_min)
      throw ValidationError("DatasetSpec: need 2 <= entities_min <= entities_max");
    if (scenes < 10) throw ValidationError("DatasetSpec: need at least 10 scenes");
    if (zipf_exponent < 0.0)
      throw ValidationError("DatasetSpec: zipf_exponent must be >= 0");
    if (feature_dim < 1) throw ValidationError("DatasetSpec: feature_dim must be >= 1");
    if (noise_sigma < 0.0)
      throw ValidationError("DatasetSpec: noise_sigma must be >= 0");
    if (context_classes < 1)
      throw ValidationError("DatasetSpec: context_classes must be >= 1");
    if (context_scale < 0.0)
      throw ValidationError("DatasetSpec: context_scale must be >= 0");
    if (key_classes < 1)
      throw ValidationError("DatasetSpec: key_classes must be >= 1");
    if (relation_density <= 0.0 || relation_density > 1.0)
      throw ValidationError("DatasetSpec: relation_density must be in (0, 1]");
    if (dominant_weight < 0.0 || dominant_weight > 1.0)
      throw ValidationError("DatasetSpec: dominant_weight must be in [0, 1]");
  }
};

// Zipf-like target marginal over real predicate classes 1..P.
inline std::vector<double> predicate_marginal(int predicate_classes,
                                              double exponent) {
  std::vector<double> w(static_cast<std::size_t>(predicate_classes));
  double total = 0.0;
  for (int k = 1; k <= predicate_classes; ++k) {
    w[static_cast<std::size_t>(k - 1)] =
        std::pow(static_cast<double>(k), -exponent);
    total += w[static_cast<std::size_t>(k - 1)];
  }
  for (double& x : w) x /= total;
  return w;
}

struct Dataset {
  DatasetSpec spec;
  std::vector<SceneSample> train, eval, test;
};

inline Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  const std::size_t d = static_cast<std::size_t>(spec.feature_dim);
  const int C = spec.instance_classes;
  const int P = spec.predicate_classes;
  const int Z = spec.context_classes;

  // shared structures drawn once, in a fixed order
  Rng setup(Rng::derive(spec.seed, 0x5e7f));
  std::vector<Tensor> prototypes;
  for (int c = 0; c < C; ++c) {
    Tensor t({d});
    for (std::size_t j = 0; j < d; ++j) t[j] = setup.uniform(-1.0, 1.0);
    prototypes.push_back(std::move(t));
  }
  std::vector<Tensor> context_offsets;
  for (int z = 0; z < Z; ++z) {
    Tensor t({d});
    if (Z > 1)
      for (std::size_t j = 0; j < d; ++j)
        t[j] = setup.uniform(-spec.context_scale, spec.context_scale);
    context_offsets.push_back(std::move(t));
  }
  const std::vector<double> marginal = predicate_marginal(P, spec.zipf_exponent);
  // dominant predicate per (subject group, object group, context)
  const int K = std::min(spec.key_classes, C);
  std::vector<int> dominant(static_cast<std::size_t>(K * K * Z));
  for (std::size_t i = 0; i < dominant.size(); ++i)
    dominant[i] = 1 + static_cast<int>(setup.categorical(marginal));

  auto conditional = [&](int sc, int oc, int z) {
    std::vector<double> p(static_cast<std::size_t>(P));
    for (int k = 0; k < P; ++k)
      p[static_cast<std::size_t>(k)] =
          (1.0 - spec.dominant_weight) * marginal[static_cast<std::size_t>(k)];
    const std::size_t key =
        static_cast<std::size_t>(((sc % K) * K + (oc % K)) * Z + z);
    p[static_cast<std::size_t>(dominant[key] - 1)] += spec.dominant_weight;
    return p;
  };

  std::vector<SceneSample> scenes;
  for (int id = 0; id < spec.scenes; ++id) {
    Rng rng(Rng::derive(spec.seed, 0x10000 + static_cast<std::uint64_t>(id)));
    SceneSample s;
    s.id = id;
    const int n = rng.uniform_int(spec.entities_min, spec.entities_max);
    const int z = Z > 1 ? rng.uniform_int(0, Z - 1) : 0;
    for (int i = 0; i < n; ++i) {
      Entity e;
      e.label = rng.uniform_int(0, C - 1);
      e.feature = Tensor({d});
      for (std::size_t j = 0; j < d; ++j)
        e.feature[j] = prototypes[static_cast<std::size_t>(e.label)][j] +
                       context_offsets[static_cast<std::size_t>(z)][j] +
                       spec.noise_sigma * rng.normal();
      s.entities.push_back(std::move(e));
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (!rng.bernoulli(spec.relation_density)) continue;
        const std::vector<double> p =
            conditional(s.entities[static_cast<std::size_t>(i)].label,
                        s.entities[static_cast<std::size_t>(j)].label, z);
        s.edges.push_back({i, j, 1 + static_cast<int>(rng.categorical(p)), true});
      }
    scenes.push_back(std::move(s));
  }

  // disjoint splits by scene id: 70/30 train/test, eval = 5% of the train block
  const int n_test = static_cast<int>(std::lround(0.3 * spec.scenes));
  const int n_train_block = spec.scenes - n_test;
  const int n_eval = static_cast<int>(std::lround(0.05 * n_train_block));
  const int n_train = n_train_block - n_eval;
  for (int id = 0; id < spec.scenes; ++id) {
    if (id < n_train) ds.train.push_back(std::move(scenes[static_cast<std::size_t>(id)]));
    else if (id < n_train_block) ds.eval.push_back(std::move(scenes[static_cast<std::size_t>(id)]));
    else ds.test.push_back(std::move(scenes[static_cast<std::size_t>(id)]));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Head / body / tail groups
// ---------------------------------------------------------------------------

enum class Group { Head, Body, Tail };

inline const char* to_string(Group g) {
  switch (g) {
    case Group::Head: return "head";
    case Group::Body: return "body";
    case Group::Tail: return "tail";
  }
  return "?";
}

struct GroupThresholds {
  // shares of the train split's predicate instances; scaled to counts inside
  // assign_groups
  double head_min_share = 0.02;
  double tail_max_share = 0.001;
};

struct GroupAssignment {
  std::vector<Group> group_of;  // indexed by predicate class; [0] unused
  std::vector<int> counts;      // training instances per class; [0] unused
  double head_min_count = 0.0;
  double tail_max_count = 0.0;
  GroupThresholds thresholds;

  std::vector<int> classes_in(Group g) const {
    std::vector<int> out;
    for (std::size_t k = 1; k < group_of.size(); ++k)
      if (group_of[k] == g) out.push_back(static_cast<int>(k));
    return out;
  }
};

inline GroupAssignment assign_groups(const std::vector<SceneSample>& train,
                                     int predicate_classes,
                                     const GroupThresholds& thresholds = {}) {
  if (!(thresholds.tail_max_share < thresholds.head_min_share) ||
      thresholds.tail_max_share < 0.0 || thresholds.head_min_share <= 0.0)
    throw ValidationError("assign_groups: degenerate thresholds");
  GroupAssignment ga;
  ga.thresholds = thresholds;
  ga.group_of.assign(static_cast<std::size_t>(predicate_classes) + 1, Group::Tail);
  ga.counts.assign(static_cast<std::size_t>(predicate_classes) + 1, 0);
  long long total = 0;
  for (const SceneSample& s : train)
    for (const PredicateEdge& e : s.edges) {
      if (e.label < 1 || e.label > predicate_classes)
        throw ValidationError("assign_groups: edge label " +
                              std::to_string(e.label) + " out of range");
      ga.counts[static_cast<std::size_t>(e.label)]++;
      ++total;
    }
  ga.head_min_count = thresholds.head_min_share * static_cast<double>(total);
  ga.tail_max_count = thresholds.tail_max_share * static_cast<double>(total);
  for (int k = 1; k <= predicate_classes; ++k) {
    const double c = static_cast<double>(ga.counts[static_cast<std::size_t>(k)]);
    Group g;
    if (c == 0.0 || c < ga.tail_max_count) g = Group::Tail;
    else if (c > ga.head_min_count) g = Group::Head;
    else g = Group::Body;
    ga.group_of[static_cast<std::size_t>(k)] = g;
  }
  return ga;
}

// ---------------------------------------------------------------------------
// Repeat-factor resampling: per-class repeat r(c) = max(1, sqrt(t / f(c)))
// with f(c) the fraction of train scenes containing class c; a scene repeats
// as the max over its classes. Inside repeat copies (never the first one),
// instances of over-represented classes (r(c) <= 1) drop with rate gamma_d.
// ---------------------------------------------------------------------------

struct SamplerConfig {
  double repeat_threshold = 0.07;  // the t of r(c) = max(1, sqrt(t / f(c)))
  double drop_rate = 0.7;          // gamma_d
  bool enabled = true;

  void validate() const {
    if (repeat_threshold <= 0.0)
      throw ValidationError("SamplerConfig: repeat_threshold must be > 0");
    if (drop_rate < 0.0 || drop_rate > 1.0)
      throw ValidationError("SamplerConfig: drop_rate must be in [0, 1]");
  }
};

struct StreamItem {
  int scene_index = 0;                // position in the train split
  std::vector<bool> edge_mask;        // per-edge supervision for this copy
};

inline std::vector<StreamItem> resample(const std::vector<SceneSample>& train,
                                        const SamplerConfig& cfg,
                                        std::uint64_t seed,
                                        int predicate_classes) {
  cfg.validate();
  std::vector<StreamItem> stream;
  if (!cfg.enabled) {
    for (std::size_t i = 0; i < train.size(); ++i)
      stream.push_back({static_cast<int>(i),
                        std::vector<bool>(train[i].edges.size(), true)});
    return stream;
  }
  const std::size_t P = static_cast<std::size_t>(predicate_classes);
  std::vector<int> scenes_with(P + 1, 0);
  for (const SceneSample& s : train) {
    std::vector<bool> present(P + 1, false);
    for (const PredicateEdge& e : s.edges)
      present[static_cast<std::size_t>(e.label)] = true;
    for (std::size_t k = 1; k <= P; ++k)
      if (present[k]) scenes_with[k]++;
  }
  std::vector<double> repeat(P + 1, 1.0);
  for (std::size_t k = 1; k <= P; ++k) {
    if (scenes_with[k] == 0) continue;
    const double f = static_cast<double>(scenes_with[k]) /
                     static_cast<double>(train.size());
    repeat[k] = std::max(1.0, std::sqrt(cfg.repeat_threshold / f));
  }
  Rng rng(Rng::derive(seed, 0x5a31));
  for (std::size_t i = 0; i < train.size(); ++i) {
    const SceneSample& s = train[i];
    double r = 1.0;
    for (const PredicateEdge& e : s.edges)
      r = std::max(r, repeat[static_cast<std::size_t>(e.label)]);
    int copies = static_cast<int>(std::floor(r));
    if (rng.uniform() < r - std::floor(r)) ++copies;
    for (int c = 0; c < copies; ++c) {
      std::vector<bool> mask(s.edges.size(), true);
      if (c > 0) {
        for (std::size_t e = 0; e < s.edges.size(); ++e)
          if (repeat[static_cast<std::size_t>(s.edges[e].label)] <= 1.0 &&
              rng.uniform() < cfg.drop_rate)
            mask[e] = false;
      }
      stream.push_back({static_cast<int>(i), std::move(mask)});
    }
  }
  rng.shuffle(stream);
  return stream;
}

inline std::uint64_t stream_hash(const std::vector<StreamItem>& stream) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix = [&](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const StreamItem& item : stream) {
    mix(static_cast<std::uint64_t>(item.scene_index));
    std::uint64_t bits = 0, n = 0;
    for (bool b : item.edge_mask) {
      bits = (bits << 1) | (b ? 1 : 0);
      if (++n == 64) {
        mix(bits);
        bits = n = 0;
      }
    }
    mix(bits ^ (n << 56));
  }
  return h;
}

// ---------------------------------------------------------------------------
// Scene -> factor graph
// ---------------------------------------------------------------------------

enum class SggTask { PredCls, SgCls, SgDetAnalogue };

inline const char* to_string(SggTask t) {
  switch (t) {
    case SggTask::PredCls: return "predcls";
    case SggTask::SgCls: return "sgcls";
    case SggTask::SgDetAnalogue: return "sgdet_analogue";
  }
  return "?";
}

struct SceneGraphData {
  FactorGraph graph;
  std::vector<std::pair<int, int>> factor_pairs;  // (subject, object) per
                                                  // pairwise factor
  std::vector<int> instance_targets;
  bool instance_supervised = false;
  std::vector<int> predicate_targets;      // 0 = background
  std::vector<bool> predicate_supervised;  // from the edges' supervised flags
};

// Variables are entities (features as v_i; predcls appends the ground-truth
// one-hot), pairwise factors are all ordered pairs, and one multi-vertex
// factor spans every variable. Scenes with fewer than two entities are
// skipped (nullopt) and counted by the caller.
inline std::optional<SceneGraphData> scene_to_factor_graph(
    const SceneSample& sample, SggTask task, int instance_classes) {
  const std::size_t n = sample.entities.size();
  if (n < 2) return std::nullopt;
  std::vector<VariableNode> vars;
  for (std::size_t i = 0; i < n; ++i) {
    const Entity& e = sample.entities[i];
    if (e.label < 0 || e.label >= instance_classes)
      throw ValidationError("scene_to_factor_graph: entity label " +
                            std::to_string(e.label) + " out of range");
    VariableNode v{static_cast<int>(i), instance_classes, {}};
    if (task == SggTask::PredCls) {
      Tensor f({e.feature.size() + static_cast<std::size_t>(instance_classes)});
      for (std::size_t j = 0; j < e.feature.size(); ++j) f[j] = e.feature[j];
      f[e.feature.size() + static_cast<std::size_t>(e.label)] = 1.0;
      v.feature = std::move(f);
    } else {
      v.feature = e.feature;
    }
    vars.push_back(std::move(v));
  }

  SceneGraphData out{FactorGraph({{0, 1, {}}, {1, 1, {}}},
                                 {{0, {0, 1}, {}, {}, FactorKind::Pairwise}}),
                     {}, {}, false, {}, {}};
  std::vector<FactorNode> facs;
  int fid = 0;
  std::map<std::pair<int, int>, std::size_t> pair_pos;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < n; ++o) {
      if (s == o) continue;
      pair_pos[{static_cast<int>(s), static_cast<int>(o)}] =
          out.factor_pairs.size();
      out.factor_pairs.push_back({static_cast<int>(s), static_cast<int>(o)});
      facs.push_back({fid++, {static_cast<int>(s), static_cast<int>(o)}, {}, {},
                      FactorKind::Pairwise});
    }
  // The global clique needs three or more vertices to be a multi-vertex
  // factor; on a 2-entity scene it would coincide with an existing pair and
  // is omitted.
  if (n >= 3) {
    std::vector<int> scope;
    for (std::size_t i = 0; i < n; ++i) scope.push_back(static_cast<int>(i));
    facs.push_back({fid++, std::move(scope), {}, {}, FactorKind::MultiVertex});
  }
  out.graph = FactorGraph(std::move(vars), std::move(facs));
  out.instance_targets.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.instance_targets[i] = sample.entities[i].label;
  out.instance_supervised = task != SggTask::PredCls;
  out.predicate_targets.assign(out.factor_pairs.size(), 0);
  out.predicate_supervised.assign(out.factor_pairs.size(), true);
  for (const PredicateEdge& e : sample.edges) {
    auto it = pair_pos.find({e.subject, e.object});
    if (it == pair_pos.end())
      throw ValidationError("scene_to_factor_graph: edge endpoints invalid");
    out.predicate_targets[it->second] = e.label;
    out.predicate_supervised[it->second] = e.supervised;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files: line-delimited JSON scenes plus a manifest
// ---------------------------------------------------------------------------

inline Json scene_to_json(const SceneSample& s) {
  Json doc = Json::object();
  Json edges = Json::array();
  for (const PredicateEdge& e : s.edges) {
    Json je = Json::object();
    je.set("label", Json::integer(e.label));
    je.set("o", Json::integer(e.object));
    je.set("s", Json::integer(e.subject));
    edges.push(std::move(je));
  }
  doc.set("edges", std::move(edges));
  Json entities = Json::array();
  for (const Entity& e : s.entities) {
    Json je = Json::object();
    je.set("feature", Json::number_array(e.feature.data()));
    je.set("label", Json::integer(e.label));
    entities.push(std::move(je));
  }
  doc.set("entities", std::move(entities));
  doc.set("id", Json::integer(s.id));
  return doc;
}

inline SceneSample scene_from_json(const nlohmann::json& doc) {
  SceneSample s;
  s.id = doc.at("id").get<int>();
  for (const auto& je : doc.at("entities")) {
    Entity e;
    std::vector<double> f = je.at("feature").get<std::vector<double>>();
    const std::size_t nf = f.size();
    e.feature = Tensor({nf}, std::move(f));
    e.label = je.at("label").get<int>();
    s.entities.push_back(std::move(e));
  }
  for (const auto& je : doc.at("edges")) {
    PredicateEdge e;
    e.subject = je.at("s").get<int>();
    e.object = je.at("o").get<int>();
    e.label = je.at("label").get<int>();
    s.edges.push_back(e);
  }
  return s;
}

inline void write_scenes(const std::vector<SceneSample>& scenes,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const SceneSample& s : scenes) out << scene_to_json(s).dump() << "\n";
}

inline std::vector<SceneSample> read_scenes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::vector<SceneSample> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("scene parse at line " +
                            std::to_string(scenes.size() + 1) + ": " + e.what());
    }
  }
  return scenes;
}

inline Json dataset_spec_to_json(const DatasetSpec& spec) {
  Json j = Json::object();
  j.set("context_classes", Json::integer(spec.context_classes));
  j.set("context_scale", Json::number(spec.context_scale));
  j.set("dominant_weight", Json::number(spec.dominant_weight));
  j.set("entities_max", Json::integer(spec.entities_max));
  j.set("entities_min", Json::integer(spec.entities_min));
  j.set("feature_dim", Json::integer(spec.feature_dim));
  j.set("instance_classes", Json::integer(spec.instance_classes));
  j.set("key_classes", Json::integer(spec.key_classes));
  j.set("noise_sigma", Json::number(spec.noise_sigma));
  j.set("predicate_classes", Json::integer(spec.predicate_classes));
  j.set("relation_density", Json::number(spec.relation_density));
  j.set("scenes", Json::integer(spec.scenes));
  j.set("seed", Json::integer(static_cast<long long>(spec.seed)));
  j.set("zipf_exponent", Json::number(spec.zipf_exponent));
  return j;
}

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.context_classes = j.at("context_classes").get<int>();
  s.context_scale = j.at("context_scale").get<double>();
  s.dominant_weight = j.at("dominant_weight").get<double>();
  s.entities_max = j.at("entities_max").get<int>();
  s.entities_min = j.at("entities_min").get<int>();
  s.feature_dim = j.at("feature_dim").get<int>();
  s.instance_classes = j.at("instance_classes").get<int>();
  s.key_classes = j.at("key_classes").get<int>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.predicate_classes = j.at("predicate_classes").get<int>();
  s.relation_density = j.at("relation_density").get<double>();
  s.scenes = j.at("scenes").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.zipf_exponent = j.at("zipf_exponent").get<double>();
  return s;
}

inline Json groups_to_json(const GroupAssignment& ga) {
  Json j = Json::object();
  Json counts = Json::array();
  for (std::size_t k = 1; k < ga.counts.size(); ++k)
    counts.push(Json::integer(ga.counts[k]));
  j.set("counts", std::move(counts));
  Json groups = Json::array();
  for (std::size_t k = 1; k < ga.group_of.size(); ++k)
    groups.push(Json::string(to_string(ga.group_of[k])));
  j.set("group_of", std::move(groups));
  j.set("head_min_count", Json::number(ga.head_min_count));
  j.set("head_min_share", Json::number(ga.thresholds.head_min_share));
  j.set("tail_max_count", Json::number(ga.tail_max_count));
  j.set("tail_max_share", Json::number(ga.thresholds.tail_max_share));
  return j;
}

inline void save_dataset(const Dataset& ds, const GroupAssignment& groups,
                         const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
  write_scenes(ds.train, dir + "/train.jsonl");
  write_scenes(ds.eval, dir + "/eval.jsonl");
  write_scenes(ds.test, dir + "/test.jsonl");
  Json manifest = Json::object();
  manifest.set("format", Json::string("fgbp-dataset-v1"));
  manifest.set("groups", groups_to_json(groups));
  manifest.set("seed", Json::integer(static_cast<long long>(ds.spec.seed)));
  manifest.set("spec", dataset_spec_to_json(ds.spec));
  Json splits = Json::object();
  splits.set("eval", Json::integer(static_cast<long long>(ds.eval.size())));
  splits.set("test", Json::integer(static_cast<long long>(ds.test.size())));
  splits.set("train", Json::integer(static_cast<long long>(ds.train.size())));
  manifest.set("splits", std::move(splits));
  std::ofstream out(dir + "/dataset_manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + dir + "/dataset_manifest.json");
  out << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/dataset_manifest.json", std::ios::binary);
  if (!in) throw IoError("cannot read " + dir + "/dataset_manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest parse: ") + e.what());
  }
  Dataset ds;
  try {
    ds.spec = dataset_spec_from_json(manifest.at("spec"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest spec: ") + e.what());
  }
  ds.train = read_scenes(dir + "/train.jsonl");
  ds.eval = read_scenes(dir + "/eval.jsonl");
  ds.test = read_scenes(dir + "/test.jsonl");
  return ds;
}

}  // namespace fgbp
