#pragma once

// Knowledge graph store: JSONL node/edge loading, a unit-normalized dense
// embedding index over node names, exact linear-scan cosine matching with a
// strict similarity threshold, incident-triple sampling, and node knowledge
// text assembly.

#include <cstring>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "emerge/ts_entities.hpp"

namespace emerge {

struct KgNode {
  int64_t id = 0;
  std::string name;
  std::string definition;
  std::string description;
};

struct KgEdge {
  int64_t head = 0;
  std::string relation;
  int64_t tail = 0;
};

struct KnowledgeGraph {
  std::vector<KgNode> nodes;
  std::vector<KgEdge> edges;
  std::unordered_map<int64_t, size_t> index_by_id;

  void rebuild_index() {
    index_by_id.clear();
    for (size_t i = 0; i < nodes.size(); ++i) {
      if (!index_by_id.emplace(nodes[i].id, i).second) {
        throw ValidationError("duplicate node id " + std::to_string(nodes[i].id));
      }
    }
  }

  const KgNode& node(int64_t id) const {
    auto it = index_by_id.find(id);
    if (it == index_by_id.end()) throw ValidationError("unknown node id " + std::to_string(id));
    return nodes[it->second];
  }

  bool has_node(int64_t id) const { return index_by_id.count(id) > 0; }

  void validate() const {
    for (const auto& n : nodes) {
      if (n.name.empty()) throw ValidationError("node " + std::to_string(n.id) + " has empty name");
    }
    for (size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      if (!has_node(e.head) || !has_node(e.tail)) {
        throw ValidationError("edge " + std::to_string(i + 1) + " references unknown node (" +
                              std::to_string(e.head) + " -> " + std::to_string(e.tail) + ")");
      }
    }
  }
};

inline KnowledgeGraph load_kg(const std::filesystem::path& nodes_path,
                              const std::filesystem::path& edges_path) {
  KnowledgeGraph kg;
  {
    std::ifstream in(nodes_path);
    if (!in) throw ValidationError("cannot open kg nodes file: " + nodes_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError("kg nodes line " + std::to_string(line_no) + ": " + e.what());
      }
      KgNode n;
      n.id = j.at("id").get<int64_t>();
      n.name = j.at("name").get<std::string>();
      n.definition = j.value("definition", std::string());
      n.description = j.value("description", std::string());
      kg.nodes.push_back(std::move(n));
    }
  }
  kg.rebuild_index();
  {
    std::ifstream in(edges_path);
    if (!in) throw ValidationError("cannot open kg edges file: " + edges_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError("kg edges line " + std::to_string(line_no) + ": " + e.what());
      }
      KgEdge e;
      e.head = j.at("head").get<int64_t>();
      e.relation = j.at("relation").get<std::string>();
      e.tail = j.at("tail").get<int64_t>();
      if (!kg.has_node(e.head) || !kg.has_node(e.tail)) {
        throw ValidationError("kg edges line " + std::to_string(line_no) +
                              ": edge references unknown node id");
      }
      kg.edges.push_back(std::move(e));
    }
  }
  kg.validate();
  return kg;
}

inline void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& nodes_path,
                    const std::filesystem::path& edges_path) {
  std::string nodes_out;
  for (const auto& n : kg.nodes) {
    ojson j;
    j["id"] = n.id;
    j["name"] = n.name;
    j["definition"] = n.definition;
    j["description"] = n.description;
    nodes_out += j.dump();
    nodes_out += '\n';
  }
  write_file_atomic(nodes_path, nodes_out);
  std::string edges_out;
  for (const auto& e : kg.edges) {
    ojson j;
    j["head"] = e.head;
    j["relation"] = e.relation;
    j["tail"] = e.tail;
    edges_out += j.dump();
    edges_out += '\n';
  }
  write_file_atomic(edges_path, edges_out);
}

// ---------------------------------------------------------------------------
// embedding index

using EmbedFn = std::function<std::vector<double>(const std::string&)>;

using RowMajorMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct NodeEmbeddingIndex {
  int dim = 0;
  RowMajorMatrixXf vectors;         // unit rows, aligned with node_order
  std::vector<int64_t> node_order;  // node id per row

  int rows() const { return static_cast<int>(node_order.size()); }
};

// One vector per node, computed from the node name and normalized to unit
// length. Zero-norm embeddings abort the build naming the node.
inline NodeEmbeddingIndex build_index(const KnowledgeGraph& kg, const EmbedFn& embed) {
  if (kg.nodes.empty()) throw ValidationError("build_index: empty graph");
  NodeEmbeddingIndex index;
  for (size_t i = 0; i < kg.nodes.size(); ++i) {
    const auto& node = kg.nodes[i];
    std::vector<double> v = embed(node.name);
    if (index.dim == 0) {
      index.dim = static_cast<int>(v.size());
      if (index.dim == 0) throw ValidationError("build_index: embedder returned empty vector");
      index.vectors.resize(static_cast<Eigen::Index>(kg.nodes.size()), index.dim);
    }
    if (static_cast<int>(v.size()) != index.dim) {
      throw ValidationError("build_index: embedding dimension changed at node '" + node.name + "'");
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    double norm = std::sqrt(norm2);
    if (norm == 0.0) {
      throw ValidationError("build_index: zero-norm embedding for node '" + node.name + "'");
    }
    for (int d = 0; d < index.dim; ++d) {
      index.vectors(static_cast<Eigen::Index>(i), d) = static_cast<float>(v[d] / norm);
    }
    index.node_order.push_back(node.id);
  }
  return index;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  if (a.empty()) throw ValidationError("cosine: empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct MatchResult {
  EntityMention query;
  std::vector<int64_t> matched_nodes;  // argmax set, ordered by node id; empty if max <= eta
  double similarity = -1.0;            // max cosine attained over the index
};

// Exhaustive scan; the argmax set is accepted only when max similarity is
// strictly above eta. Plain loop accumulation keeps the arithmetic order
// fixed so exact ties (duplicated rows) stay exact.
inline MatchResult match_entity(const EntityMention& entity, const NodeEmbeddingIndex& index,
                                const EmbedFn& embed, double eta) {
  if (eta <= 0.0 || eta >= 1.0) throw ValidationError("match_entity: eta must be in (0,1)");
  if (index.rows() == 0) throw ValidationError("match_entity: empty index");
  std::vector<double> q = embed(entity.surface);
  if (static_cast<int>(q.size()) != index.dim) {
    throw ValidationError("match_entity: query dimension " + std::to_string(q.size()) +
                          " != index dimension " + std::to_string(index.dim));
  }
  double qn2 = 0.0;
  for (double x : q) qn2 += x * x;
  if (qn2 == 0.0) throw ValidationError("match_entity: zero query embedding");
  double qn = std::sqrt(qn2);
  for (double& x : q) x /= qn;

  MatchResult result;
  result.query = entity;
  double best = -2.0;
  std::vector<int64_t> best_ids;
  for (int r = 0; r < index.rows(); ++r) {
    double dot = 0.0;
    const float* row = index.vectors.data() + static_cast<size_t>(r) * index.dim;
    for (int d = 0; d < index.dim; ++d) dot += static_cast<double>(row[d]) * q[d];
    if (dot > best) {
      best = dot;
      best_ids.clear();
      best_ids.push_back(index.node_order[r]);
    } else if (dot == best) {
      best_ids.push_back(index.node_order[r]);
    }
  }
  result.similarity = best;
  if (best > eta) {
    std::sort(best_ids.begin(), best_ids.end());
    result.matched_nodes = std::move(best_ids);
  }
  return result;
}

// ---------------------------------------------------------------------------
// triple sampling and knowledge text

// Uniform sample without replacement from edges incident to any matched
// node; all of them when fewer than k exist.
inline std::vector<KgEdge> sample_triples(const KnowledgeGraph& kg,
                                          const std::vector<int64_t>& matched_ids, int k,
                                          uint64_t seed) {
  if (k < 0) throw ValidationError("sample_triples: k must be >= 0");
  if (k == 0 || matched_ids.empty()) return {};
  std::unordered_set<int64_t> wanted(matched_ids.begin(), matched_ids.end());
  std::vector<KgEdge> incident;
  for (const auto& e : kg.edges) {
    if (wanted.count(e.head) || wanted.count(e.tail)) incident.push_back(e);
  }
  if (static_cast<int>(incident.size()) <= k) return incident;
  Rng rng(seed);
  // partial Fisher-Yates: the first k slots become the sample
  for (int i = 0; i < k; ++i) {
    size_t j = i + rng.index(incident.size() - i);
    std::swap(incident[i], incident[j]);
  }
  incident.resize(k);
  return incident;
}

// "name: definition description" with empty fields skipped.
inline std::string node_knowledge(const KnowledgeGraph& kg, int64_t id) {
  const KgNode& n = kg.node(id);
  std::string out = n.name + ":";
  if (!n.definition.empty()) out += " " + n.definition;
  if (!n.description.empty()) out += " " + n.description;
  return out;
}

// ---------------------------------------------------------------------------
// binary index persistence
// layout: "KGIX" | u32 version | u32 n_rows | u32 dim | f32 rows | u64 ids

constexpr uint32_t kIndexFormatVersion = 1;

inline void save_index(const NodeEmbeddingIndex& index, const std::filesystem::path& path) {
  std::string buf;
  auto put_u32 = [&buf](uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
  };
  buf.append("KGIX", 4);
  put_u32(kIndexFormatVersion);
  put_u32(static_cast<uint32_t>(index.rows()));
  put_u32(static_cast<uint32_t>(index.dim));
  buf.append(reinterpret_cast<const char*>(index.vectors.data()),
             static_cast<size_t>(index.rows()) * index.dim * sizeof(float));
  for (int64_t id : index.node_order) {
    uint64_t u = static_cast<uint64_t>(id);
    char b[8];
    std::memcpy(b, &u, 8);
    buf.append(b, 8);
  }
  write_file_atomic(path, buf);
}

inline NodeEmbeddingIndex load_index(const std::filesystem::path& path) {
  std::string buf = read_file(path);
  if (buf.size() < 16 || buf.compare(0, 4, "KGIX") != 0) {
    throw ValidationError("not a KGIX index file: " + path.string());
  }
  auto get_u32 = [&buf](size_t off) {
    uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
  };
  uint32_t version = get_u32(4);
  if (version != kIndexFormatVersion) {
    throw ValidationError("unsupported index version " + std::to_string(version));
  }
  uint32_t n_rows = get_u32(8);
  uint32_t dim = get_u32(12);
  size_t expect = 16 + static_cast<size_t>(n_rows) * dim * sizeof(float) +
                  static_cast<size_t>(n_rows) * sizeof(uint64_t);
  if (buf.size() != expect) throw ValidationError("truncated index file: " + path.string());
  NodeEmbeddingIndex index;
  index.dim = static_cast<int>(dim);
  index.vectors.resize(n_rows, dim);
  std::memcpy(index.vectors.data(), buf.data() + 16,
              static_cast<size_t>(n_rows) * dim * sizeof(float));
  size_t ids_off = 16 + static_cast<size_t>(n_rows) * dim * sizeof(float);
  index.node_order.resize(n_rows);
  for (uint32_t r = 0; r < n_rows; ++r) {
    uint64_t u;
    std::memcpy(&u, buf.data() + ids_off + static_cast<size_t>(r) * 8, 8);
    index.node_order[r] = static_cast<int64_t>(u);
  }
  return index;
}

}  // namespace emerge
