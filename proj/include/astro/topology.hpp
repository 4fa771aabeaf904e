#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "astro/errors.hpp"
#include "astro/tensor.hpp"

namespace astro {

// Declarative plant description: named subsystems of uniquely-named nodes,
// plus which subsystems are physically adjacent. Nodes within a subsystem are
// fully connected at intra_weight; nodes of adjacent subsystems are fully
// connected at inter_weight.
struct Subsystem {
  std::string name;
  std::vector<std::string> nodes;
};

struct PlantSpec {
  std::vector<Subsystem> subsystems;                        // order defines node indices
  std::vector<std::pair<std::string, std::string>> adjacencies;
  double intra_weight = 1.0;
  double inter_weight = 0.5;

  size_t n_nodes() const {
    size_t n = 0;
    for (const auto& s : subsystems) n += s.nodes.size();
    return n;
  }

  // Node index = position in the concatenation of subsystem node lists.
  std::vector<std::string> node_names() const {
    std::vector<std::string> names;
    for (const auto& s : subsystems)
      for (const auto& n : s.nodes) names.push_back(n);
    return names;
  }
};

// Directed weighted edge list over node indices. Symmetric by construction;
// self-loops are never stored (normalization adds them).
struct TopologyGraph {
  size_t n_nodes = 0;
  std::vector<std::pair<size_t, size_t>> edges;
  std::vector<double> edge_weights;
};

inline void validate(const PlantSpec& spec) {
  if (spec.subsystems.empty()) throw ValidationError("plant spec: no subsystems declared");
  if (!(spec.intra_weight > 0.0) || !(spec.inter_weight > 0.0))
    throw ValidationError("plant spec: connection weights must be > 0");
  std::set<std::string> subsystem_names;
  std::set<std::string> node_ids;
  for (const auto& s : spec.subsystems) {
    if (s.name.empty()) throw ValidationError("plant spec: subsystem with empty name");
    if (!subsystem_names.insert(s.name).second)
      throw ValidationError("plant spec: duplicate subsystem name '" + s.name + "'");
    if (s.nodes.empty())
      throw ValidationError("plant spec: subsystem '" + s.name + "' has no nodes");
    for (const auto& n : s.nodes) {
      if (!node_ids.insert(n).second)
        throw ValidationError("plant spec: duplicate node ID '" + n + "'");
    }
  }
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [a, b] : spec.adjacencies) {
    if (a == b)
      throw ValidationError("plant spec: adjacency links subsystem '" + a + "' to itself");
    if (!subsystem_names.count(a))
      throw ValidationError("plant spec: adjacency references unknown subsystem '" + a + "'");
    if (!subsystem_names.count(b))
      throw ValidationError("plant spec: adjacency references unknown subsystem '" + b + "'");
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    if (!seen.insert(key).second)
      throw ValidationError("plant spec: duplicate adjacency '" + a + "'-'" + b + "'");
  }
}

// Builds the directed edge list: all ordered pairs within each subsystem at
// intra_weight, all ordered cross pairs for each declared adjacency at
// inter_weight.
inline TopologyGraph build_topology(const PlantSpec& spec) {
  validate(spec);

  std::map<std::string, std::vector<size_t>> members;
  size_t index = 0;
  for (const auto& s : spec.subsystems) {
    auto& ids = members[s.name];
    for (size_t i = 0; i < s.nodes.size(); ++i) ids.push_back(index++);
  }

  TopologyGraph g;
  g.n_nodes = index;
  for (const auto& s : spec.subsystems) {
    const auto& ids = members[s.name];
    for (size_t u : ids)
      for (size_t v : ids) {
        if (u == v) continue;
        g.edges.emplace_back(u, v);
        g.edge_weights.push_back(spec.intra_weight);
      }
  }
  for (const auto& [a, b] : spec.adjacencies) {
    for (size_t u : members[a])
      for (size_t v : members[b]) {
        g.edges.emplace_back(u, v);
        g.edge_weights.push_back(spec.inter_weight);
        g.edges.emplace_back(v, u);
        g.edge_weights.push_back(spec.inter_weight);
      }
  }
  return g;
}

// Symmetric-normalized propagation operator D^{-1/2} (A + I) D^{-1/2} as a
// dense N x N matrix, where A holds the stored edge weights and D is the
// row-sum degree of A + I. An isolated node reduces to 1 on the diagonal.
inline Tensor normalized_operator(const TopologyGraph& g) {
  const size_t n = g.n_nodes;
  if (n == 0) throw ValidationError("normalized_operator: graph has no nodes");
  Tensor adj({n, n});
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const auto [u, v] = g.edges[e];
    if (u >= n || v >= n) throw ValidationError("normalized_operator: edge index out of range");
    if (u == v) throw ValidationError("normalized_operator: stored self-edge not allowed");
    adj.at(u, v) += g.edge_weights[e];
  }
  for (size_t i = 0; i < n; ++i) adj.at(i, i) += 1.0;  // self-loop

  std::vector<double> inv_sqrt_deg(n);
  for (size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (size_t j = 0; j < n; ++j) d += adj.at(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
  }
  Tensor op({n, n});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j)
      op.at(i, j) = inv_sqrt_deg[i] * adj.at(i, j) * inv_sqrt_deg[j];
  return op;
}

// --- plant spec file format -------------------------------------------------
//
// JSON document:
//   {
//     "subsystems": [ {"name": "P1", "nodes": ["FIT101", ...]}, ... ],
//     "adjacencies": [ ["P1", "P2"], ... ],
//     "intra_weight": 1.0,
//     "inter_weight": 0.5
//   }
// Subsystem order is significant (it defines node indices), hence the array.

inline nlohmann::json to_json(const PlantSpec& spec) {
  nlohmann::json j;
  j["subsystems"] = nlohmann::json::array();
  for (const auto& s : spec.subsystems)
    j["subsystems"].push_back({{"name", s.name}, {"nodes", s.nodes}});
  j["adjacencies"] = nlohmann::json::array();
  for (const auto& [a, b] : spec.adjacencies)
    j["adjacencies"].push_back({a, b});
  j["intra_weight"] = spec.intra_weight;
  j["inter_weight"] = spec.inter_weight;
  return j;
}

inline PlantSpec plant_spec_from_json(const nlohmann::json& j) {
  PlantSpec spec;
  try {
    for (const auto& s : j.at("subsystems")) {
      Subsystem sub;
      sub.name = s.at("name").get<std::string>();
      sub.nodes = s.at("nodes").get<std::vector<std::string>>();
      spec.subsystems.push_back(std::move(sub));
    }
    if (j.contains("adjacencies"))
      for (const auto& a : j.at("adjacencies")) {
        if (!a.is_array() || a.size() != 2)
          throw ValidationError("plant spec: adjacency entries must be [name, name] pairs");
        spec.adjacencies.emplace_back(a[0].get<std::string>(), a[1].get<std::string>());
      }
    spec.intra_weight = j.value("intra_weight", 1.0);
    spec.inter_weight = j.value("inter_weight", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("plant spec: malformed document: ") + e.what());
  }
  validate(spec);
  return spec;
}

inline PlantSpec load_plant_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("plant spec: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("plant spec: parse error in '" + path + "': " + e.what());
  }
  return plant_spec_from_json(j);
}

inline void save_plant_spec(const PlantSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("plant spec: cannot write '" + path + "'");
  out << to_json(spec).dump(2) << '\n';
}

}  // namespace astro
