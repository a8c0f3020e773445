#pragma once

#include <cstdint>
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
#include "fgbp/tensor.hpp"

namespace fgbp {

enum class Aggregator { Mean, Max };

inline const char* to_string(Aggregator a) {
  return a == Aggregator::Mean ? "mean" : "max";
}

inline ReduceMode reduce_mode(Aggregator a) {
  return a == Aggregator::Mean ? ReduceMode::Mean : ReduceMode::Max;
}

// ---------------------------------------------------------------------------
// EdgeIndex: connection configuration of one factor list. The same pair list
// serves both message directions; by_factor/by_variable are the gather and
// scatter groupings.
// ---------------------------------------------------------------------------

struct EdgeIndex {
  // (variable id, position of the factor in the list), canonical order
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::vector<int>> by_factor;    // list position -> edge indices
  std::vector<std::vector<int>> by_variable;  // variable id -> edge indices

  std::size_t size() const { return pairs.size(); }
};

inline EdgeIndex build_edge_index(const FactorGraph& g,
                                  const std::vector<int>& factor_ids) {
  EdgeIndex idx;
  idx.by_factor.resize(factor_ids.size());
  idx.by_variable.resize(g.num_variables());
  for (std::size_t pos = 0; pos < factor_ids.size(); ++pos) {
    const FactorNode& f = g.factors()[static_cast<std::size_t>(factor_ids[pos])];
    for (int v : g.variables_of(f.id)) {
      const int e = static_cast<int>(idx.pairs.size());
      idx.pairs.push_back({v, static_cast<int>(pos)});
      idx.by_factor[pos].push_back(e);
      idx.by_variable[static_cast<std::size_t>(v)].push_back(e);
    }
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct NbpWidths {
  std::size_t input = 64;   // raw variable feature width
  std::size_t state = 64;   // v_i / g_j width (the m = n of the message nets)
  std::size_t edge = 64;    // t_ij width
  std::size_t hidden = 64;  // hidden width of edge/m/head MLPs
  std::size_t instance_classes = 1;
  std::size_t predicate_classes = 1;  // includes the background class

  bool operator==(const NbpWidths&) const = default;

  void validate() const {
    if (!input || !state || !edge || !hidden || !instance_classes ||
        !predicate_classes)
      throw ValidationError("NbpWidths: all widths must be positive");
  }
};

// One Variable-to-Factor or Factor-to-Variable message network (Eq. 15):
// t_ij = edge_mlp([v_i, g_j]); Q(t_ij) an state x state matrix from q_mlp;
// M([v_i, g_j]) a state vector from m_mlp.
struct MessageNetParams {
  MlpParams edge_mlp;
  MlpParams q_mlp;
  MlpParams m_mlp;
};

struct NbpLayerParams {
  MessageNetParams pw_vf, pw_fv;  // pairwise factor list
  std::optional<MessageNetParams> mv_vf, mv_fv;  // multi-vertex factor list
  Aggregator aggregator = Aggregator::Mean;
};

struct NbpStack {
  NbpWidths widths;
  Aggregator aggregator = Aggregator::Mean;
  bool higher_order = true;
  std::uint64_t seed = 0;
  MlpParams input_proj;  // input -> state
  MlpParams pair_init;   // shared projection [v_s, v_o] -> initial g
  std::vector<NbpLayerParams> layers;
  MlpParams variable_head;
  MlpParams predicate_head;
};

// Visits every MLP in a canonical order shared by parameter iteration,
// lifting, and checkpoints.
template <typename Stack, typename Fn>
void visit_mlps(Stack& stack, Fn&& fn) {
  fn("input_proj", stack.input_proj);
  fn("pair_init", stack.pair_init);
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& layer = stack.layers[l];
    auto net = [&](const std::string& name, auto& m) {
      fn(p + name + ".edge", m.edge_mlp);
      fn(p + name + ".q", m.q_mlp);
      fn(p + name + ".m", m.m_mlp);
    };
    net("pw_vf", layer.pw_vf);
    net("pw_fv", layer.pw_fv);
    if (layer.mv_vf) net("mv_vf", *layer.mv_vf);
    if (layer.mv_fv) net("mv_fv", *layer.mv_fv);
  }
  fn("variable_head", stack.variable_head);
  fn("predicate_head", stack.predicate_head);
}

template <typename Stack, typename Fn>
void for_each_param(Stack& stack, Fn&& fn) {
  visit_mlps(stack, [&](const std::string& name, auto& mlp) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      fn(name + ".w" + std::to_string(l), mlp.layers[l].w);
      fn(name + ".b" + std::to_string(l), mlp.layers[l].b);
    }
  });
}

inline std::size_t num_params(const NbpStack& stack) {
  std::size_t n = 0;
  visit_mlps(stack, [&](const std::string&, const MlpParams& m) {
    for (const auto& l : m.layers) n += l.w.size() + l.b.size();
  });
  return n;
}

inline NbpStack init_params(const NbpWidths& widths, std::size_t n_layers,
                            Aggregator aggregator, bool higher_order,
                            std::uint64_t seed) {
  widths.validate();
  NbpStack s;
  s.widths = widths;
  s.aggregator = aggregator;
  s.higher_order = higher_order;
  s.seed = seed;
  Rng rng(Rng::derive(seed, 0xfb9));
  const std::size_t d = widths.state;
  s.input_proj = make_mlp({widths.input, d}, rng);
  s.pair_init = make_mlp({2 * d, d}, rng);
  for (std::size_t l = 0; l < n_layers; ++l) {
    NbpLayerParams layer;
    layer.aggregator = aggregator;
    auto net = [&]() {
      MessageNetParams m;
      m.edge_mlp = make_mlp({2 * d, widths.hidden, widths.edge}, rng);
      // The Q(t) M(x) product contracts over `state` entries; a 1/state init
      // scale on Q keeps stacked layers from blowing up multiplicatively.
      m.q_mlp = make_mlp({widths.edge, d * d}, rng, 1.0 / static_cast<double>(d));
      m.m_mlp = make_mlp({2 * d, widths.hidden, d}, rng);
      return m;
    };
    layer.pw_vf = net();
    layer.pw_fv = net();
    if (higher_order) {
      layer.mv_vf = net();
      layer.mv_fv = net();
    }
    s.layers.push_back(std::move(layer));
  }
  s.variable_head = make_mlp({d, widths.hidden, widths.instance_classes}, rng);
  s.predicate_head = make_mlp({d, widths.hidden, widths.predicate_classes}, rng);
  return s;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

// A factor graph prepared for the stack: variable features stacked into a
// matrix and the two factor lists with their index matrices. Unary factors
// carry no message network; their evidence belongs in the variable features.
struct NbpGraphView {
  Tensor var_features;  // [n_vars x input]
  std::vector<int> pairwise_factors;
  std::vector<int> multivertex_factors;
  std::vector<std::size_t> pair_subject, pair_object;  // variable row per
                                                       // pairwise factor
  EdgeIndex pw_index, mv_index;
  std::size_t n_vars = 0;
};

inline NbpGraphView make_nbp_view(const FactorGraph& g) {
  NbpGraphView view;
  view.n_vars = g.num_variables();
  std::size_t width = 0;
  for (const VariableNode& v : g.variables()) {
    if (!v.feature)
      throw ValidationError("make_nbp_view: variable " + std::to_string(v.id) +
                            " has no feature");
    if (v.feature->rank() != 1)
      throw ValidationError("make_nbp_view: features must be vectors");
    if (width == 0)
      width = v.feature->size();
    else if (v.feature->size() != width)
      throw DimensionError("make_nbp_view: feature width mismatch at variable " +
                           std::to_string(v.id));
  }
  view.var_features = Tensor({view.n_vars, width});
  for (const VariableNode& v : g.variables())
    for (std::size_t j = 0; j < width; ++j)
      view.var_features[static_cast<std::size_t>(v.id) * width + j] =
          (*v.feature)[j];
  for (const FactorNode& f : g.factors()) {
    if (f.kind == FactorKind::Pairwise) {
      view.pairwise_factors.push_back(f.id);
      view.pair_subject.push_back(static_cast<std::size_t>(f.scope[0]));
      view.pair_object.push_back(static_cast<std::size_t>(f.scope[1]));
    } else if (f.kind == FactorKind::MultiVertex) {
      view.multivertex_factors.push_back(f.id);
    }
  }
  view.pw_index = build_edge_index(g, view.pairwise_factors);
  view.mv_index = build_edge_index(g, view.multivertex_factors);
  return view;
}

struct LiftedMessageNet {
  MlpVars edge_mlp, q_mlp, m_mlp;
};

struct LiftedStack {
  MlpVars input_proj, pair_init, variable_head, predicate_head;
  struct Layer {
    LiftedMessageNet pw_vf, pw_fv;
    std::optional<LiftedMessageNet> mv_vf, mv_fv;
    Aggregator aggregator;
  };
  std::vector<Layer> layers;
  // flat view aligned with for_each_param order
  std::vector<std::pair<std::string, Var>> named;
};

inline LiftedStack lift_stack(const NbpStack& stack, bool track_gradients) {
  LiftedStack ls;
  // mirror visit_mlps order by lifting in one traversal
  visit_mlps(stack, [&](const std::string& name, const MlpParams& mlp) {
    MlpVars lifted = lift(mlp, track_gradients);
    for (std::size_t l = 0; l < lifted.layers.size(); ++l) {
      ls.named.push_back({name + ".w" + std::to_string(l), lifted.layers[l].first});
      ls.named.push_back({name + ".b" + std::to_string(l), lifted.layers[l].second});
    }
    if (name == "input_proj") ls.input_proj = lifted;
    else if (name == "pair_init") ls.pair_init = lifted;
    else if (name == "variable_head") ls.variable_head = lifted;
    else if (name == "predicate_head") ls.predicate_head = lifted;
    else {
      // layerN.<net>.<part>
      const std::size_t dot1 = name.find('.');
      const std::size_t dot2 = name.find('.', dot1 + 1);
      const std::size_t layer_idx =
          static_cast<std::size_t>(std::stoul(name.substr(5, dot1 - 5)));
      if (ls.layers.size() <= layer_idx) ls.layers.resize(layer_idx + 1);
      LiftedStack::Layer& layer = ls.layers[layer_idx];
      layer.aggregator = stack.layers[layer_idx].aggregator;
      const std::string net = name.substr(dot1 + 1, dot2 - dot1 - 1);
      const std::string part = name.substr(dot2 + 1);
      LiftedMessageNet* target = nullptr;
      if (net == "pw_vf") target = &layer.pw_vf;
      else if (net == "pw_fv") target = &layer.pw_fv;
      else if (net == "mv_vf") {
        if (!layer.mv_vf) layer.mv_vf.emplace();
        target = &*layer.mv_vf;
      } else {
        if (!layer.mv_fv) layer.mv_fv.emplace();
        target = &*layer.mv_fv;
      }
      if (part == "edge") target->edge_mlp = lifted;
      else if (part == "q") target->q_mlp = lifted;
      else target->m_mlp = lifted;
    }
  });
  return ls;
}

// One message direction over one factor list (Fig. 3): per edge, multiply the
// Q(t_ij) matrix with the M([v_i, g_j]) vector, then aggregate the products
// at the receiving side. Returns [n_groups x state].
inline Var nbp_message_step(const LiftedMessageNet& net, const Var& V,
                            const Var& G, const EdgeIndex& idx, bool to_factor,
                            std::size_t n_groups, std::size_t state,
                            Aggregator aggregator) {
  std::vector<std::size_t> var_rows, fac_rows;
  var_rows.reserve(idx.size());
  fac_rows.reserve(idx.size());
  for (const auto& [v, f] : idx.pairs) {
    var_rows.push_back(static_cast<std::size_t>(v));
    fac_rows.push_back(static_cast<std::size_t>(f));
  }
  Var X = concat_cols(gather_rows(V, var_rows), gather_rows(G, fac_rows));
  Var T = mlp_forward(net.edge_mlp, X);
  Var Q = mlp_forward(net.q_mlp, T);
  Var M = mlp_forward(net.m_mlp, X);
  Var P = edge_matvec(Q, M, state, state);
  const std::vector<std::size_t>& groups = to_factor ? fac_rows : var_rows;
  return scatter_reduce(P, groups, n_groups, reduce_mode(aggregator));
}

struct NbpForwardResult {
  Var variable_logits;   // [n_vars x instance_classes]
  Var predicate_logits;  // [n_pairwise x predicate_classes]
  LiftedStack params;
};

// Full stack forward (Eqs. 14-15 stacked, Fig. 2/3 wiring): per layer the
// pairwise list runs Variable-to-Factor then Factor-to-Variable, then the
// multi-vertex list does the same with its Factor-to-Variable output added
// onto the variable features, so zeroed multi-vertex parameters reduce the
// stack to the pairwise-only model.
inline NbpForwardResult nbp_forward(const NbpGraphView& view,
                                    const NbpStack& stack,
                                    bool track_gradients = false) {
  stack.widths.validate();
  if (view.var_features.cols() != stack.widths.input)
    throw DimensionError("nbp_forward: feature width " +
                         std::to_string(view.var_features.cols()) +
                         " vs stack input " +
                         std::to_string(stack.widths.input));
  // 2-variable graphs cannot host a distinct global clique; everywhere else
  // a missing multi-vertex factor is a wiring mistake.
  if (stack.higher_order && view.multivertex_factors.empty() && view.n_vars >= 3)
    throw ValidationError(
        "nbp_forward: stack expects a multi-vertex factor but the graph has "
        "none");
  const std::size_t d = stack.widths.state;
  const std::size_t n_pw = view.pairwise_factors.size();
  const std::size_t n_mv = view.multivertex_factors.size();

  LiftedStack ls = lift_stack(stack, track_gradients);
  Var V = mlp_forward(ls.input_proj, constant(view.var_features));
  Var Gpw = constant(Tensor({0, d}));
  if (n_pw > 0) {
    Var subj = gather_rows(V, view.pair_subject);
    Var obj = gather_rows(V, view.pair_object);
    Gpw = mlp_forward(ls.pair_init, concat_cols(subj, obj));
  }
  Var Gmv = constant(Tensor({0, d}));
  if (n_mv > 0) {
    // initial multi-vertex feature: mean of the scope's variable features
    std::vector<std::size_t> rows, groups;
    for (const auto& [v, f] : view.mv_index.pairs) {
      rows.push_back(static_cast<std::size_t>(v));
      groups.push_back(static_cast<std::size_t>(f));
    }
    Gmv = scatter_reduce(gather_rows(V, rows), groups, n_mv, ReduceMode::Mean);
  }

  for (const LiftedStack::Layer& layer : ls.layers) {
    if (n_pw > 0) {
      Gpw = nbp_message_step(layer.pw_vf, V, Gpw, view.pw_index, true, n_pw, d,
                             layer.aggregator);
      V = nbp_message_step(layer.pw_fv, V, Gpw, view.pw_index, false,
                           view.n_vars, d, layer.aggregator);
    }
    if (stack.higher_order && n_mv > 0) {
      Gmv = nbp_message_step(*layer.mv_vf, V, Gmv, view.mv_index, true, n_mv, d,
                             layer.aggregator);
      V = add(V, nbp_message_step(*layer.mv_fv, V, Gmv, view.mv_index, false,
                                  view.n_vars, d, layer.aggregator));
    }
  }

  NbpForwardResult out;
  out.variable_logits = mlp_forward(ls.variable_head, V);
  out.predicate_logits = n_pw > 0
                             ? mlp_forward(ls.predicate_head, Gpw)
                             : constant(Tensor({0, stack.widths.predicate_classes}));
  out.params = std::move(ls);
  return out;
}

// ---------------------------------------------------------------------------
// Generic MPNN (Eq. 13) over a plain pairwise graph; the mean-field baseline
// backend. m_i aggregates M([v_i, v_j, e_ij]) over undirected neighbors, then
// v_i' = U([v_i, m_i]).
// ---------------------------------------------------------------------------

struct MpnnParams {
  MlpParams message_net;  // [2d + de] -> msg
  MlpParams update_net;   // [d + msg] -> out
};

inline Tensor generic_mpnn_step(
    const Tensor& node_features, const std::vector<std::pair<int, int>>& edges,
    const std::vector<Tensor>& edge_features, const MpnnParams& params,
    ReduceMode aggregator = ReduceMode::Sum) {
  if (node_features.rank() != 2)
    throw DimensionError("generic_mpnn_step: node features must be [n x d]");
  const std::size_t n = node_features.rows();
  const std::size_t d = node_features.cols();
  if (!edge_features.empty() && edge_features.size() != edges.size())
    throw DimensionError("generic_mpnn_step: edge feature count mismatch");
  const std::size_t de = edge_features.empty() ? 0 : edge_features[0].size();
  if (params.message_net.input_width() != 2 * d + de)
    throw DimensionError("generic_mpnn_step: message net fan-in " +
                         std::to_string(params.message_net.input_width()) +
                         " vs " + std::to_string(2 * d + de));
  const std::size_t msg = params.message_net.output_width();

  std::vector<std::vector<std::pair<int, int>>> nbrs(n);  // (neighbor, edge)
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n ||
        static_cast<std::size_t>(b) >= n)
      throw IndexError("generic_mpnn_step: edge endpoint out of range");
    nbrs[static_cast<std::size_t>(a)].push_back({b, static_cast<int>(e)});
    nbrs[static_cast<std::size_t>(b)].push_back({a, static_cast<int>(e)});
  }

  Tensor out({n, params.update_net.output_width()});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor m({msg});  // zero message for empty neighborhoods
    if (!nbrs[i].empty()) {
      std::vector<Tensor> msgs;
      for (const auto& [j, e] : nbrs[i]) {
        Tensor x({2 * d + de});
        for (std::size_t k = 0; k < d; ++k) {
          x[k] = node_features[i * d + k];
          x[d + k] = node_features[static_cast<std::size_t>(j) * d + k];
        }
        for (std::size_t k = 0; k < de; ++k)
          x[2 * d + k] = edge_features[static_cast<std::size_t>(e)][k];
        msgs.push_back(mlp_forward(params.message_net, x));
      }
      std::vector<Var> vars;
      for (Tensor& t : msgs) vars.push_back(constant(std::move(t)));
      m = reduce(vars, aggregator)->value;
    }
    Tensor x({d + msg});
    for (std::size_t k = 0; k < d; ++k) x[k] = node_features[i * d + k];
    for (std::size_t k = 0; k < msg; ++k) x[d + k] = m[k];
    Tensor y = mlp_forward(params.update_net, x);
    for (std::size_t k = 0; k < y.size(); ++k)
      out[i * y.size() + k] = y[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline Json checkpoint_to_json(const NbpStack& stack) {
  Json doc = Json::object();
  doc.set("format", Json::string("fgbp-nbp-checkpoint-v1"));
  Json w = Json::object();
  w.set("input", Json::integer(static_cast<long long>(stack.widths.input)));
  w.set("state", Json::integer(static_cast<long long>(stack.widths.state)));
  w.set("edge", Json::integer(static_cast<long long>(stack.widths.edge)));
  w.set("hidden", Json::integer(static_cast<long long>(stack.widths.hidden)));
  w.set("instance_classes",
        Json::integer(static_cast<long long>(stack.widths.instance_classes)));
  w.set("predicate_classes",
        Json::integer(static_cast<long long>(stack.widths.predicate_classes)));
  doc.set("widths", std::move(w));
  doc.set("layers", Json::integer(static_cast<long long>(stack.layers.size())));
  doc.set("aggregator", Json::string(to_string(stack.aggregator)));
  doc.set("higher_order", Json::boolean(stack.higher_order));
  doc.set("seed", Json::integer(static_cast<long long>(stack.seed)));
  Json params = Json::array();
  for_each_param(stack, [&](const std::string& name, const Tensor& t) {
    Json p = Json::object();
    p.set("name", Json::string(name));
    Json shape = Json::array();
    for (std::size_t s : t.shape())
      shape.push(Json::integer(static_cast<long long>(s)));
    p.set("shape", std::move(shape));
    p.set("values", Json::number_array(t.data()));
    params.push(std::move(p));
  });
  doc.set("params", std::move(params));
  return doc;
}

inline void save_checkpoint(const NbpStack& stack, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << checkpoint_to_json(stack).dump(1) << "\n";
}

inline NbpStack load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint parse: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "fgbp-nbp-checkpoint-v1")
      throw CheckpointError("unknown checkpoint format");
    NbpWidths w;
    const auto& jw = doc.at("widths");
    w.input = jw.at("input").get<std::size_t>();
    w.state = jw.at("state").get<std::size_t>();
    w.edge = jw.at("edge").get<std::size_t>();
    w.hidden = jw.at("hidden").get<std::size_t>();
    w.instance_classes = jw.at("instance_classes").get<std::size_t>();
    w.predicate_classes = jw.at("predicate_classes").get<std::size_t>();
    const std::size_t n_layers = doc.at("layers").get<std::size_t>();
    const std::string agg_str = doc.at("aggregator").get<std::string>();
    if (agg_str != "mean" && agg_str != "max")
      throw CheckpointError("unknown aggregator \"" + agg_str + "\"");
    const Aggregator agg =
        agg_str == "mean" ? Aggregator::Mean : Aggregator::Max;
    const bool ho = doc.at("higher_order").get<bool>();
    const std::uint64_t seed = doc.at("seed").get<std::uint64_t>();
    NbpStack stack = init_params(w, n_layers, agg, ho, seed);
    std::map<std::string, std::vector<double>> values;
    std::map<std::string, std::vector<std::size_t>> shapes;
    for (const auto& p : doc.at("params")) {
      values[p.at("name").get<std::string>()] =
          p.at("values").get<std::vector<double>>();
      shapes[p.at("name").get<std::string>()] =
          p.at("shape").get<std::vector<std::size_t>>();
    }
    std::size_t used = 0;
    for_each_param(stack, [&](const std::string& name, Tensor& t) {
      auto it = values.find(name);
      if (it == values.end())
        throw CheckpointError("checkpoint missing parameter \"" + name + "\"");
      if (shapes[name] != t.shape())
        throw CheckpointError("checkpoint parameter \"" + name +
                              "\" has wrong shape");
      t = Tensor(t.shape(), it->second);
      ++used;
    });
    if (used != values.size())
      throw CheckpointError("checkpoint carries " +
                            std::to_string(values.size()) +
                            " parameters, expected " + std::to_string(used));
    return stack;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint parse: ") + e.what());
  }
}

// Guards a loaded checkpoint against the widths the caller needs.
inline void require_widths(const NbpStack& stack, const NbpWidths& expect) {
  if (!(stack.widths == expect))
    throw CheckpointError("checkpoint widths do not match the requested model");
}

}  // namespace fgbp
