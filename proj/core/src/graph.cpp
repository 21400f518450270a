#include "bot/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bot {

namespace {

std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adjacency, int source) {
  std::vector<int> dist(adjacency.size(), -1);
  std::queue<int> frontier;
  dist[static_cast<size_t>(source)] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adjacency[static_cast<size_t>(u)]) {
      if (dist[static_cast<size_t>(v)] < 0) {
        dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
        frontier.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

EmbodimentGraph::EmbodimentGraph(std::vector<NodeSpec> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  const int n = size();
  if (n < 1) throw Error("graph: at least one node is required");

  int roots = 0;
  for (int i = 0; i < n; ++i) {
    auto& spec = nodes_[static_cast<size_t>(i)];
    spec.id = i;
    if (spec.obs_dim < 0 || spec.action_dim < 0) {
      throw Error("graph: node '" + spec.name + "' has a negative dimension");
    }
    if (spec.is_root) {
      root_ = i;
      ++roots;
    }
  }
  if (roots != 1) throw Error("graph: expected exactly one root node, found " + std::to_string(roots));

  adjacency_.assign(static_cast<size_t>(n), {});
  std::set<Edge> seen;
  for (auto [a, b] : edges_) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw Error("graph: edge [" + std::to_string(a) + "," + std::to_string(b) + "] out of range");
    }
    if (a == b) throw Error("graph: self-loop on node " + std::to_string(a));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      throw Error("graph: duplicate edge [" + std::to_string(a) + "," + std::to_string(b) + "]");
    }
    adjacency_[static_cast<size_t>(a)].push_back(b);
    adjacency_[static_cast<size_t>(b)].push_back(a);
  }
  for (auto& list : adjacency_) std::sort(list.begin(), list.end());

  const auto dist = bfs_distances(adjacency_, 0);
  if (std::any_of(dist.begin(), dist.end(), [](int d) { return d < 0; })) {
    throw Error("graph: graph is disconnected");
  }
}

int EmbodimentGraph::total_obs_dim() const {
  return std::accumulate(nodes_.begin(), nodes_.end(), 0,
                         [](int acc, const NodeSpec& s) { return acc + s.obs_dim; });
}

int EmbodimentGraph::total_action_dim() const {
  return std::accumulate(nodes_.begin(), nodes_.end(), 0,
                         [](int acc, const NodeSpec& s) { return acc + s.action_dim; });
}

int EmbodimentGraph::max_obs_dim() const {
  int best = 0;
  for (const auto& s : nodes_) best = std::max(best, s.obs_dim);
  return best;
}

std::uint64_t EmbodimentGraph::fingerprint() const {
  std::ostringstream canon;
  canon << size() << ';';
  for (const auto& s : nodes_) {
    canon << s.name << ',' << s.obs_dim << ',' << s.action_dim << ',' << s.is_root << ';';
  }
  std::vector<Edge> sorted;
  for (auto [a, b] : edges_) sorted.emplace_back(std::min(a, b), std::max(a, b));
  std::sort(sorted.begin(), sorted.end());
  for (auto [a, b] : sorted) canon << a << '-' << b << ';';

  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : canon.str()) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

EmbodimentGraph EmbodimentGraph::relabeled(const std::vector<int>& perm) const {
  const int n = size();
  if (static_cast<int>(perm.size()) != n) throw Error("graph: permutation size mismatch");
  std::vector<NodeSpec> nodes(static_cast<size_t>(n));
  std::vector<bool> hit(static_cast<size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    if (p < 0 || p >= n || hit[static_cast<size_t>(p)]) throw Error("graph: not a permutation");
    hit[static_cast<size_t>(p)] = true;
    nodes[static_cast<size_t>(p)] = nodes_[static_cast<size_t>(i)];
  }
  std::vector<Edge> edges;
  edges.reserve(edges_.size());
  for (auto [a, b] : edges_) edges.emplace_back(perm[static_cast<size_t>(a)], perm[static_cast<size_t>(b)]);
  return EmbodimentGraph(std::move(nodes), std::move(edges));
}

// ---------------------------------------------------------------------------
// AttentionMask

AttentionMask AttentionMask::from_entries(int n, std::vector<std::uint8_t> entries) {
  if (n < 1) throw Error("mask: size must be positive");
  if (entries.size() != static_cast<size_t>(n) * static_cast<size_t>(n)) {
    throw Error("mask: expected " + std::to_string(n * n) + " entries");
  }
  for (int i = 0; i < n; ++i) {
    if (entries[static_cast<size_t>(i * n + i)] != 1) throw Error("mask: diagonal entries must be 1");
    for (int j = 0; j < n; ++j) {
      const auto v = entries[static_cast<size_t>(i * n + j)];
      if (v > 1) throw Error("mask: entries must be 0 or 1");
      if (v != entries[static_cast<size_t>(j * n + i)]) throw Error("mask: matrix must be symmetric");
    }
  }
  return AttentionMask(n, std::move(entries));
}

AttentionMask AttentionMask::identity(int n) {
  std::vector<std::uint8_t> e(static_cast<size_t>(n) * static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) e[static_cast<size_t>(i * n + i)] = 1;
  return from_entries(n, std::move(e));
}

AttentionMask AttentionMask::all_ones(int n) {
  return from_entries(n, std::vector<std::uint8_t>(static_cast<size_t>(n) * static_cast<size_t>(n), 1));
}

std::int64_t AttentionMask::nonzeros() const {
  return std::count(entries_.begin(), entries_.end(), std::uint8_t{1});
}

// ---------------------------------------------------------------------------
// Graph document

EmbodimentGraph parse_graph(std::string_view document) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("graph: malformed document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw Error("graph: malformed document: missing \"nodes\" array");
  }
  std::vector<NodeSpec> nodes;
  std::vector<Edge> edges;
  try {
    for (const auto& item : doc["nodes"]) {
      NodeSpec spec;
      spec.name = item.at("name").get<std::string>();
      spec.obs_dim = item.at("obs_dim").get<int>();
      spec.action_dim = item.at("action_dim").get<int>();
      spec.is_root = item.value("root", false);
      nodes.push_back(std::move(spec));
    }
    if (doc.contains("edges")) {
      for (const auto& item : doc.at("edges")) {
        if (!item.is_array() || item.size() != 2) throw Error("graph: malformed document: edge must be a pair");
        edges.emplace_back(item[0].get<int>(), item[1].get<int>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("graph: malformed document: ") + e.what());
  }
  return EmbodimentGraph(std::move(nodes), std::move(edges));
}

EmbodimentGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("graph: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_graph(buffer.str());
}

std::string to_document(const EmbodimentGraph& g) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& s : g.nodes()) {
    doc["nodes"].push_back({{"name", s.name}, {"obs_dim", s.obs_dim}, {"action_dim", s.action_dim}, {"root", s.is_root}});
  }
  doc["edges"] = nlohmann::json::array();
  for (auto [a, b] : g.edges()) doc["edges"].push_back({a, b});
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Matrices and metrics

IntMatrix adjacency_matrix(const EmbodimentGraph& g) {
  IntMatrix a = IntMatrix::Zero(g.size(), g.size());
  for (auto [i, j] : g.edges()) {
    a(i, j) = 1;
    a(j, i) = 1;
  }
  return a;
}

AttentionMask build_mask(const EmbodimentGraph& g) {
  const int n = g.size();
  std::vector<std::uint8_t> e(static_cast<size_t>(n) * static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) e[static_cast<size_t>(i * n + i)] = 1;
  for (auto [i, j] : g.edges()) {
    e[static_cast<size_t>(i * n + j)] = 1;
    e[static_cast<size_t>(j * n + i)] = 1;
  }
  return AttentionMask::from_entries(n, std::move(e));
}

IntMatrix shortest_path_matrix(const EmbodimentGraph& g) {
  const int n = g.size();
  std::vector<std::vector<int>> adjacency(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) adjacency[static_cast<size_t>(i)] = g.neighbors(i);
  IntMatrix d(n, n);
  for (int i = 0; i < n; ++i) {
    const auto row = bfs_distances(adjacency, i);
    for (int j = 0; j < n; ++j) d(i, j) = row[static_cast<size_t>(j)];
  }
  return d;
}

int diameter(const EmbodimentGraph& g) { return shortest_path_matrix(g).maxCoeff(); }

double zero_fraction(const AttentionMask& m) {
  const double n2 = static_cast<double>(m.size()) * m.size();
  return (n2 - static_cast<double>(m.nonzeros())) / n2;
}

AttentionMask random_mask(int n, double zero_fraction, std::uint64_t seed) {
  if (n < 1) throw Error("random_mask: n must be positive");
  const double max_fraction = 1.0 - 1.0 / n;
  if (!(zero_fraction >= 0.0) || zero_fraction > max_fraction + 1e-12) {
    throw Error("random_mask: zero fraction must lie in [0, 1 - 1/n]");
  }
  const std::int64_t n2 = static_cast<std::int64_t>(n) * n;
  // The epsilon absorbs representation error, e.g. (1 - 1/n)·n² landing just below n² - n.
  auto zeros = static_cast<std::int64_t>(std::floor(zero_fraction * static_cast<double>(n2) + 1e-9));
  zeros = std::min(zeros, n2 - n);
  zeros -= zeros % 2;

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<size_t>(n2 - n) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

  // Partial Fisher-Yates: the first zeros/2 pairs become zeros.
  std::mt19937_64 rng(seed);
  const auto drop = static_cast<size_t>(zeros / 2);
  for (size_t k = 0; k < drop; ++k) {
    std::uniform_int_distribution<size_t> pick(k, pairs.size() - 1);
    std::swap(pairs[k], pairs[pick(rng)]);
  }

  std::vector<std::uint8_t> e(static_cast<size_t>(n2), 1);
  for (size_t k = 0; k < drop; ++k) {
    auto [i, j] = pairs[k];
    e[static_cast<size_t>(i * n + j)] = 0;
    e[static_cast<size_t>(j * n + i)] = 0;
  }
  return AttentionMask::from_entries(n, std::move(e));
}

std::vector<int> mask_ball(const AttentionMask& m, int node, int radius) {
  const int n = m.size();
  std::vector<int> dist(static_cast<size_t>(n), -1);
  std::vector<int> frontier{node};
  dist[static_cast<size_t>(node)] = 0;
  for (int step = 1; step <= radius && !frontier.empty(); ++step) {
    std::vector<int> next;
    for (int u : frontier)
      for (int v = 0; v < n; ++v)
        if (m(u, v) && dist[static_cast<size_t>(v)] < 0) {
          dist[static_cast<size_t>(v)] = step;
          next.push_back(v);
        }
    frontier = std::move(next);
  }
  std::vector<int> ball;
  for (int v = 0; v < n; ++v)
    if (dist[static_cast<size_t>(v)] >= 0) ball.push_back(v);
  return ball;
}

void write_mask(std::ostream& out, const AttentionMask& m) {
  const int n = m.size();
  out << "n=" << n << '\n';
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j) out << ' ';
      out << (m(i, j) ? '1' : '0');
    }
    out << '\n';
  }
}

AttentionMask read_mask(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("n=", 0) != 0) throw Error("mask: missing n=<int> header");
  int n = 0;
  try {
    n = std::stoi(header.substr(2));
  } catch (const std::exception&) {
    throw Error("mask: bad header '" + header + "'");
  }
  if (n < 1) throw Error("mask: size must be positive");
  std::vector<std::uint8_t> entries;
  entries.reserve(static_cast<size_t>(n) * static_cast<size_t>(n));
  for (int k = 0; k < n * n; ++k) {
    int v = -1;
    if (!(in >> v) || (v != 0 && v != 1)) throw Error("mask: expected " + std::to_string(n * n) + " 0/1 entries");
    entries.push_back(static_cast<std::uint8_t>(v));
  }
  return AttentionMask::from_entries(n, std::move(entries));
}

// ---------------------------------------------------------------------------
// Allocation

namespace {

void place(const EmbodimentGraph& g, const std::vector<LayoutEntry>& layout, bool actions,
           std::vector<Allocation::Slot>& slots, std::vector<std::vector<IndexRange>>& ranges, int& width) {
  const int n = g.size();
  ranges.assign(static_cast<size_t>(n), {});
  std::vector<int> per_node(static_cast<size_t>(n), 0);
  int offset = 0;
  for (const auto& entry : layout) {
    if (entry.node < 0 || entry.node >= n) {
      throw Error("allocate: quantity '" + entry.quantity + "' assigned to nonexistent node " + std::to_string(entry.node));
    }
    if (entry.width < 0) throw Error("allocate: quantity '" + entry.quantity + "' has negative width");
    IndexRange r{offset, offset + entry.width};
    slots.push_back({entry.quantity, entry.node, r});
    auto& node_ranges = ranges[static_cast<size_t>(entry.node)];
    if (!node_ranges.empty() && node_ranges.back().end == r.begin) {
      node_ranges.back().end = r.end;
    } else if (entry.width > 0) {
      node_ranges.push_back(r);
    }
    per_node[static_cast<size_t>(entry.node)] += entry.width;
    offset += entry.width;
  }
  for (int i = 0; i < n; ++i) {
    const int expected = actions ? g.node(i).action_dim : g.node(i).obs_dim;
    if (per_node[static_cast<size_t>(i)] != expected) {
      throw Error(std::string("allocate: node '") + g.node(i).name + "' " + (actions ? "action" : "observation") +
                  " width " + std::to_string(per_node[static_cast<size_t>(i)]) + " != declared " +
                  std::to_string(expected));
    }
  }
  width = offset;
}

}  // namespace

Allocation allocate(const EmbodimentGraph& g, const std::vector<LayoutEntry>& observation_layout,
                    const std::vector<LayoutEntry>& action_layout) {
  Allocation a;
  place(g, observation_layout, false, a.obs_slots_, a.obs_ranges_, a.obs_width_);
  place(g, action_layout, true, a.act_slots_, a.act_ranges_, a.act_width_);
  return a;
}

Allocation contiguous_allocation(const EmbodimentGraph& g) {
  std::vector<LayoutEntry> obs;
  std::vector<LayoutEntry> act;
  for (const auto& s : g.nodes()) {
    obs.push_back({s.name + "/obs", s.obs_dim, s.id});
    act.push_back({s.name + "/act", s.action_dim, s.id});
  }
  return allocate(g, obs, act);
}

Vector Allocation::gather_observation(const Vector& obs, int node) const {
  if (obs.size() != obs_width_) throw Error("allocation: observation width mismatch");
  const auto& ranges = observation_ranges(node);
  int width = 0;
  for (const auto& r : ranges) width += r.width();
  Vector local(width);
  int k = 0;
  for (const auto& r : ranges) {
    local.segment(k, r.width()) = obs.segment(r.begin, r.width());
    k += r.width();
  }
  return local;
}

Vector Allocation::gather_action(const Vector& actions, int node) const {
  if (actions.size() != act_width_) throw Error("allocation: action width mismatch");
  const auto& ranges = action_ranges(node);
  int width = 0;
  for (const auto& r : ranges) width += r.width();
  Vector local(width);
  int k = 0;
  for (const auto& r : ranges) {
    local.segment(k, r.width()) = actions.segment(r.begin, r.width());
    k += r.width();
  }
  return local;
}

void Allocation::scatter_action(const Vector& local, int node, Vector& actions) const {
  int k = 0;
  for (const auto& r : action_ranges(node)) {
    actions.segment(r.begin, r.width()) = local.segment(k, r.width());
    k += r.width();
  }
  if (k != local.size()) throw Error("allocation: local action width mismatch");
}

}  // namespace bot
