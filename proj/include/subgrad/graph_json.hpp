#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "subgrad/core.hpp"
#include "subgrad/problems.hpp"
#include "subgrad/sampling.hpp"
#include "subgrad/tape.hpp"

namespace subgrad {

using nlohmann::json;

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
  require(obj.is_object(), ErrorCode::ConfigError, where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    require(allowed.count(it.key()) > 0, ErrorCode::ConfigError,
            where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_required(const json& obj, const std::string& key, const std::string& where) {
  require(obj.contains(key), ErrorCode::ConfigError,
          where + ": missing key '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ConfigError, where + ": bad value for '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ConfigError, where + ": bad value for '" + key + "'");
  }
}

}  // namespace detail

/// Node-list graph description used by CLI config files:
/// {"w_dim": 1, "s_dim": 1,
///  "nodes": [{"kind": "input_w", "offset": 0, "len": 1},
///            {"kind": "abs", "in": [0]},
///            {"kind": "input_s", "offset": 0, "len": 1},
///            {"kind": "mul", "in": [2, 1]}],
///  "output": 3}
inline std::shared_ptr<ExprGraph> graph_from_json(const json& spec) {
  detail::check_keys(spec, {"w_dim", "s_dim", "nodes", "output"}, "graph");
  auto g = std::make_shared<ExprGraph>(
      detail::get_required<std::size_t>(spec, "w_dim", "graph"),
      detail::get_required<std::size_t>(spec, "s_dim", "graph"));
  const json& nodes = spec.at("nodes");
  require(nodes.is_array() && !nodes.empty(), ErrorCode::ConfigError,
          "graph: nodes must be a non-empty array");

  int count = 0;
  for (const json& n : nodes) {
    std::string where = "graph node " + std::to_string(count);
    std::string kind = detail::get_required<std::string>(n, "kind", where);
    auto inputs = [&](std::size_t arity) {
      auto in = detail::get_required<std::vector<int>>(n, "in", where);
      require(in.size() == arity, ErrorCode::ConfigError, where + ": bad arity");
      for (int i : in)
        require(i >= 0 && i < count, ErrorCode::ConfigError,
                where + ": input must reference an earlier node");
      return in;
    };
    int made = -1;
    if (kind == "input_w" || kind == "input_s") {
      detail::check_keys(n, {"kind", "offset", "len"}, where);
      int off = detail::get_required<int>(n, "offset", where);
      int len = detail::get_required<int>(n, "len", where);
      made = kind == "input_w" ? g->input_w(off, len) : g->input_s(off, len);
    } else if (kind == "const") {
      detail::check_keys(n, {"kind", "value"}, where);
      made = g->constant(detail::get_required<Vec>(n, "value", where));
    } else if (kind == "add" || kind == "sub" || kind == "mul" || kind == "max2" ||
               kind == "dot" || kind == "squared_loss") {
      detail::check_keys(n, {"kind", "in"}, where);
      auto in = inputs(2);
      if (kind == "add") made = g->add(in[0], in[1]);
      else if (kind == "sub") made = g->sub(in[0], in[1]);
      else if (kind == "mul") made = g->mul(in[0], in[1]);
      else if (kind == "max2") made = g->max2(in[0], in[1]);
      else if (kind == "dot") made = g->dot(in[0], in[1]);
      else made = g->squared_loss(in[0], in[1]);
    } else if (kind == "abs" || kind == "relu" || kind == "norm1") {
      detail::check_keys(n, {"kind", "in"}, where);
      auto in = inputs(1);
      if (kind == "abs") made = g->abs(in[0]);
      else if (kind == "relu") made = g->relu(in[0]);
      else made = g->norm1(in[0]);
    } else if (kind == "matvec" || kind == "affine_layer") {
      detail::check_keys(n, {"kind", "in", "rows", "cols"}, where);
      auto in = inputs(2);
      int rows = detail::get_required<int>(n, "rows", where);
      int cols = detail::get_required<int>(n, "cols", where);
      made = kind == "matvec" ? g->matvec(in[0], in[1], rows, cols)
                              : g->affine_layer(in[0], in[1], rows, cols);
    } else {
      fail(ErrorCode::ConfigError, where + ": unknown kind '" + kind + "'");
    }
    (void)made;
    ++count;
  }
  g->set_output(detail::get_required<int>(spec, "output", "graph"));
  return g;
}

inline DistributionSpec dist_from_json(const json& spec) {
  std::string kind = detail::get_required<std::string>(spec, "kind", "dist");
  if (kind == "discrete_atoms") {
    detail::check_keys(spec, {"kind", "points", "weights"}, "dist");
    return DistributionSpec::discrete_atoms(
        detail::get_required<std::vector<Vec>>(spec, "points", "dist"),
        detail::get_required<std::vector<double>>(spec, "weights", "dist"));
  }
  if (kind == "uniform_box") {
    detail::check_keys(spec, {"kind", "lo", "hi"}, "dist");
    return DistributionSpec::uniform_box(detail::get_required<Vec>(spec, "lo", "dist"),
                                         detail::get_required<Vec>(spec, "hi", "dist"));
  }
  if (kind == "truncated_gaussian") {
    detail::check_keys(spec, {"kind", "mean", "sd", "lo", "hi"}, "dist");
    return DistributionSpec::truncated_gaussian(
        detail::get_required<double>(spec, "mean", "dist"),
        detail::get_required<double>(spec, "sd", "dist"),
        detail::get_required<Vec>(spec, "lo", "dist"),
        detail::get_required<Vec>(spec, "hi", "dist"));
  }
  if (kind == "product_mixture") {
    detail::check_keys(spec, {"kind", "labels", "weights", "conditionals"}, "dist");
    std::vector<DistributionSpec> conds;
    for (const json& c : spec.at("conditionals")) conds.push_back(dist_from_json(c));
    return DistributionSpec::product_mixture(
        detail::get_required<std::vector<Vec>>(spec, "labels", "dist"),
        detail::get_required<std::vector<double>>(spec, "weights", "dist"),
        std::move(conds));
  }
  fail(ErrorCode::ConfigError, "dist: unknown kind '" + kind + "'");
}

/// Inline problem description: a graph plus a distribution.
inline Problem problem_from_json(const json& spec, const std::string& name) {
  detail::check_keys(spec, {"graph", "dist"}, "problem");
  auto g = graph_from_json(spec.at("graph"));
  return Problem::from_graph(name, std::move(g), dist_from_json(spec.at("dist")));
}

}  // namespace subgrad
