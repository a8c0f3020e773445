#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fgbp/synthetic_sgg.hpp"
#include "helpers.hpp"

using namespace fgbp;

namespace {

DatasetSpec small_spec() {
  DatasetSpec s;
  s.scenes = 120;
  s.instance_classes = 6;
  s.predicate_classes = 8;
  s.entities_min = 3;
  s.entities_max = 5;
  s.feature_dim = 6;
  s.seed = 7;
  return s;
}

std::vector<int> predicate_counts(const std::vector<SceneSample>& scenes,
                                  int P) {
  std::vector<int> counts(static_cast<std::size_t>(P) + 1, 0);
  for (const auto& s : scenes)
    for (const auto& e : s.edges) counts[static_cast<std::size_t>(e.label)]++;
  return counts;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generation is seed-deterministic") {
  Dataset a = generate(small_spec());
  Dataset b = generate(small_spec());
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    REQUIRE(a.train[i].entities.size() == b.train[i].entities.size());
    for (std::size_t j = 0; j < a.train[i].entities.size(); ++j) {
      CHECK(a.train[i].entities[j].label == b.train[i].entities[j].label);
      CHECK(a.train[i].entities[j].feature.data() ==
            b.train[i].entities[j].feature.data());
    }
  }
  DatasetSpec other = small_spec();
  other.seed = 8;
  Dataset c = generate(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.train.size() && !any_diff; ++i)
    if (a.train[i].entities.size() != c.train[i].entities.size() ||
        a.train[i].entities[0].feature.data() !=
            c.train[i].entities[0].feature.data())
      any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("splits are disjoint and cover the scene set") {
  Dataset ds = generate(small_spec());
  std::set<int> ids;
  for (const auto* split : {&ds.train, &ds.eval, &ds.test})
    for (const SceneSample& s : *split) CHECK(ids.insert(s.id).second);
  CHECK(ids.size() == 120);
  // 70/30 with 5% of the train block carved out for eval
  CHECK(ds.test.size() == 36);
  CHECK(ds.eval.size() == 4);
  CHECK(ds.train.size() == 80);
}

TEST_CASE("noise-free single-context features equal prototypes exactly") {
  DatasetSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  spec.context_classes = 1;
  Dataset ds = generate(spec);
  // nearest-prototype labeling is perfect: identical labels share identical
  // features, and distinct labels have distinct features
  std::map<int, std::vector<double>> proto;
  for (const SceneSample& s : ds.train)
    for (const Entity& e : s.entities) {
      auto it = proto.find(e.label);
      if (it == proto.end())
        proto[e.label] = e.feature.data();
      else
        CHECK(it->second == e.feature.data());
    }
  for (auto it = proto.begin(); it != proto.end(); ++it)
    for (auto jt = std::next(it); jt != proto.end(); ++jt)
      CHECK(it->second != jt->second);
}

TEST_CASE("zero exponent gives near-uniform predicate frequencies") {
  DatasetSpec spec = small_spec();
  spec.zipf_exponent = 0.0;
  spec.dominant_weight = 0.0;  // pure marginal draw: only multinomial noise
  spec.scenes = 400;
  Dataset ds = generate(spec);
  std::vector<int> counts = predicate_counts(ds.train, spec.predicate_classes);
  long long total = 0;
  for (int k = 1; k <= spec.predicate_classes; ++k) total += counts[k];
  // chi-square sanity bound against the uniform expectation
  const double expect =
      static_cast<double>(total) / spec.predicate_classes;
  double chi2 = 0.0;
  for (int k = 1; k <= spec.predicate_classes; ++k) {
    const double d = counts[static_cast<std::size_t>(k)] - expect;
    chi2 += d * d / expect;
  }
  // 7 degrees of freedom; 0.999 quantile is ~24.3
  CHECK(chi2 < 24.3);
}

TEST_CASE("zipf marginal is honored and frequencies decay") {
  DatasetSpec spec = small_spec();
  spec.scenes = 600;
  Dataset ds = generate(spec);
  std::vector<int> counts = predicate_counts(ds.train, spec.predicate_classes);
  CHECK(counts[1] > counts[4]);
  CHECK(counts[4] > counts[8]);
  const std::vector<double> target =
      predicate_marginal(spec.predicate_classes, spec.zipf_exponent);
  long long total = 0;
  for (int k = 1; k <= spec.predicate_classes; ++k) total += counts[k];
  for (int k = 1; k <= spec.predicate_classes; ++k) {
    const double share =
        static_cast<double>(counts[static_cast<std::size_t>(k)]) / total;
    CHECK(std::abs(share - target[static_cast<std::size_t>(k - 1)]) < 0.08);
  }
}

TEST_CASE("group assignment partitions the classes") {
  Dataset ds = generate(small_spec());
  GroupAssignment ga = assign_groups(ds.train, 8);
  CHECK(ga.group_of.size() == 9);
  // idempotent on the identical split
  GroupAssignment gb = assign_groups(ds.train, 8);
  for (std::size_t k = 1; k <= 8; ++k) CHECK(ga.group_of[k] == gb.group_of[k]);
  // every class is in exactly one group by construction; spot the split
  CHECK(ga.classes_in(Group::Head).size() + ga.classes_in(Group::Body).size() +
            ga.classes_in(Group::Tail).size() ==
        8);

  SECTION("all classes head when uniformly frequent above the bar") {
    DatasetSpec spec = small_spec();
    spec.zipf_exponent = 0.0;
    spec.scenes = 400;
    Dataset u = generate(spec);
    GroupAssignment g = assign_groups(u.train, 8);
    CHECK(g.classes_in(Group::Head).size() == 8);
  }
  SECTION("zipf 1.5 on 12 classes under the default scaled thresholds") {
    DatasetSpec spec;
    spec.scenes = 800;
    spec.seed = 1;
    Dataset z = generate(spec);
    GroupAssignment g = assign_groups(z.train, 12);
    // counted oracle: with a smooth zipf(1.5) marginal over 12 classes the
    // rarest share is ~1.1% of instances, so the default 0.1% tail bar stays
    // empty while head and body are both populated
    CHECK_FALSE(g.classes_in(Group::Head).empty());
    CHECK_FALSE(g.classes_in(Group::Body).empty());
    CHECK(g.classes_in(Group::Tail).empty());
    // steeper thresholds recover all three groups
    GroupAssignment g2 = assign_groups(z.train, 12, {0.10, 0.03});
    CHECK_FALSE(g2.classes_in(Group::Head).empty());
    CHECK_FALSE(g2.classes_in(Group::Body).empty());
    CHECK_FALSE(g2.classes_in(Group::Tail).empty());
  }
  SECTION("empty predicate class lands in tail") {
    SceneSample s;
    s.id = 0;
    s.entities.resize(3);
    s.edges = {{0, 1, 1, true}, {1, 2, 1, true}, {0, 2, 2, true}};
    GroupAssignment g = assign_groups({s}, 3);
    CHECK(g.group_of[3] == Group::Tail);
  }
  SECTION("degenerate thresholds rejected") {
    Dataset d2 = generate(small_spec());
    CHECK_THROWS_AS(assign_groups(d2.train, 8, {0.001, 0.02}), ValidationError);
  }
}

TEST_CASE("resampling") {
  Dataset ds = generate(small_spec());
  const int P = 8;
  SECTION("disabled sampler is the identity stream") {
    SamplerConfig cfg;
    cfg.enabled = false;
    std::vector<StreamItem> stream = resample(ds.train, cfg, 3, P);
    REQUIRE(stream.size() == ds.train.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
      CHECK(stream[i].scene_index == static_cast<int>(i));
      for (bool b : stream[i].edge_mask) CHECK(b);
    }
  }
  SECTION("threshold at the minimum frequency keeps all repeats at one") {
    // f(c) >= t for every class when t is tiny: stream is a permutation of
    // the split with full masks
    SamplerConfig cfg;
    cfg.repeat_threshold = 1e-6;
    std::vector<StreamItem> stream = resample(ds.train, cfg, 3, P);
    REQUIRE(stream.size() == ds.train.size());
    std::set<int> seen;
    for (const StreamItem& item : stream) {
      CHECK(seen.insert(item.scene_index).second);
      for (bool b : item.edge_mask) CHECK(b);
    }
  }
  SECTION("tail share strictly increases and no class loses instances") {
    // steep tail so the rarest classes appear in < 7% of scenes and the
    // t = 0.07 repeat rule actually bites
    DatasetSpec spec = small_spec();
    spec.scenes = 600;
    spec.zipf_exponent = 2.2;
    spec.relation_density = 0.25;
    Dataset z = generate(spec);
    SamplerConfig cfg;  // t = 0.07, gamma_d = 0.7
    std::vector<StreamItem> stream = resample(z.train, cfg, 11, P);
    std::vector<long long> base(static_cast<std::size_t>(P) + 1, 0),
        sampled(static_cast<std::size_t>(P) + 1, 0);
    for (const SceneSample& s : z.train)
      for (const PredicateEdge& e : s.edges)
        base[static_cast<std::size_t>(e.label)]++;
    for (const StreamItem& item : stream) {
      const SceneSample& s = z.train[static_cast<std::size_t>(item.scene_index)];
      for (std::size_t e = 0; e < s.edges.size(); ++e)
        if (item.edge_mask[e])
          sampled[static_cast<std::size_t>(s.edges[e].label)]++;
    }
    long long base_total = 0, sampled_total = 0;
    for (int k = 1; k <= P; ++k) {
      base_total += base[static_cast<std::size_t>(k)];
      sampled_total += sampled[static_cast<std::size_t>(k)];
      // never below the original count
      CHECK(sampled[static_cast<std::size_t>(k)] >=
            base[static_cast<std::size_t>(k)]);
    }
    CHECK(sampled_total > base_total);  // the sampler actually repeated scenes
    const double base_tail =
        static_cast<double>(base[P]) / static_cast<double>(base_total);
    const double sampled_tail =
        static_cast<double>(sampled[P]) / static_cast<double>(sampled_total);
    CHECK(sampled_tail > base_tail);
  }
  SECTION("stream is deterministic under the seed") {
    SamplerConfig cfg;
    std::vector<StreamItem> a = resample(ds.train, cfg, 5, P);
    std::vector<StreamItem> b = resample(ds.train, cfg, 5, P);
    CHECK(stream_hash(a) == stream_hash(b));
    std::vector<StreamItem> c = resample(ds.train, cfg, 6, P);
    CHECK(stream_hash(a) != stream_hash(c));
  }
}

TEST_CASE("scene_to_factor_graph") {
  SceneSample s;
  s.id = 3;
  for (int i = 0; i < 3; ++i) {
    Entity e;
    e.feature = Tensor({2}, {0.5 * i, 1.0});
    e.label = i % 2;
    s.entities.push_back(std::move(e));
  }
  s.edges = {{0, 1, 2, true}, {2, 0, 1, false}};

  SECTION("structure: n(n-1) ordered pairs plus the global factor") {
    auto data = scene_to_factor_graph(s, SggTask::SgCls, 4);
    REQUIRE(data.has_value());
    CHECK(data->graph.num_variables() == 3);
    CHECK(data->factor_pairs.size() == 6);
    CHECK(data->graph.num_factors() == 7);
    // 6 pairwise factors x 2 edges + 1 global factor x 3 edges
    CHECK(data->graph.edges().size() == 15);
    CHECK(data->instance_supervised);
    CHECK(data->instance_targets == std::vector<int>{0, 1, 0});
    // labeled pairs carry their predicate, the rest are background
    int labeled = 0;
    for (std::size_t p = 0; p < data->factor_pairs.size(); ++p) {
      if (data->factor_pairs[p] == std::pair<int, int>{0, 1}) {
        CHECK(data->predicate_targets[p] == 2);
        CHECK(data->predicate_supervised[p]);
        ++labeled;
      } else if (data->factor_pairs[p] == std::pair<int, int>{2, 0}) {
        CHECK(data->predicate_targets[p] == 1);
        CHECK_FALSE(data->predicate_supervised[p]);
        ++labeled;
      } else {
        CHECK(data->predicate_targets[p] == 0);
        CHECK(data->predicate_supervised[p]);
      }
    }
    CHECK(labeled == 2);
  }
  SECTION("predcls appends one-hot labels, sgcls does not") {
    auto pred = scene_to_factor_graph(s, SggTask::PredCls, 4);
    auto sg = scene_to_factor_graph(s, SggTask::SgCls, 4);
    REQUIRE(pred.has_value());
    REQUIRE(sg.has_value());
    CHECK(pred->graph.variables()[0].feature->size() == 6);
    CHECK(sg->graph.variables()[0].feature->size() == 2);
    CHECK((*pred->graph.variables()[1].feature)[2 + 1] == 1.0);
    CHECK_FALSE(pred->instance_supervised);
  }
  SECTION("two-entity scene gets two pair factors and no global clique") {
    SceneSample tiny;
    tiny.id = 0;
    tiny.entities.resize(2);
    tiny.entities[0].feature = Tensor({1}, {0.0});
    tiny.entities[0].label = 0;
    tiny.entities[1].feature = Tensor({1}, {1.0});
    tiny.entities[1].label = 0;
    auto data = scene_to_factor_graph(tiny, SggTask::SgCls, 2);
    REQUIRE(data.has_value());
    CHECK(data->factor_pairs.size() == 2);
    CHECK(data->graph.num_factors() == 2);
    CHECK(data->graph.edges().size() == 4);
  }
  SECTION("degenerate scene is skipped") {
    SceneSample lone;
    lone.id = 1;
    lone.entities.resize(1);
    lone.entities[0].feature = Tensor({1}, {0.0});
    CHECK_FALSE(scene_to_factor_graph(lone, SggTask::SgCls, 2).has_value());
  }
  SECTION("graph passes construction validation for generated scenes") {
    Dataset ds = generate(small_spec());
    for (std::size_t i = 0; i < 10; ++i) {
      auto data = scene_to_factor_graph(ds.train[i], SggTask::SgDetAnalogue,
                                        ds.spec.instance_classes);
      REQUIRE(data.has_value());
      const std::size_t n = data->graph.num_variables();
      CHECK(data->factor_pairs.size() == n * (n - 1));
    }
  }
}

TEST_CASE("dataset files round-trip and are byte-identical across runs") {
  namespace fs = std::filesystem;
  DatasetSpec spec = small_spec();
  spec.scenes = 40;
  Dataset ds = generate(spec);
  GroupAssignment ga = assign_groups(ds.train, spec.predicate_classes);
  const std::string dir_a = "sgg_io_test_a";
  const std::string dir_b = "sgg_io_test_b";
  save_dataset(ds, ga, dir_a);
  save_dataset(generate(spec), ga, dir_b);
  for (const char* name : {"train.jsonl", "eval.jsonl", "test.jsonl",
                           "dataset_manifest.json"})
    CHECK(read_file(dir_a + "/" + std::string(name)) ==
          read_file(dir_b + "/" + std::string(name)));

  Dataset loaded = load_dataset(dir_a);
  CHECK(loaded.spec.seed == spec.seed);
  REQUIRE(loaded.train.size() == ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(loaded.train[i].id == ds.train[i].id);
    REQUIRE(loaded.train[i].edges.size() == ds.train[i].edges.size());
    for (std::size_t e = 0; e < ds.train[i].edges.size(); ++e) {
      CHECK(loaded.train[i].edges[e].subject == ds.train[i].edges[e].subject);
      CHECK(loaded.train[i].edges[e].label == ds.train[i].edges[e].label);
    }
    for (std::size_t j = 0; j < ds.train[i].entities.size(); ++j)
      CHECK(loaded.train[i].entities[j].feature.data() ==
            ds.train[i].entities[j].feature.data());
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("spec validation rejects bad fields") {
  DatasetSpec s = small_spec();
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = small_spec();
  s.entities_min = 1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = small_spec();
  s.relation_density = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}
