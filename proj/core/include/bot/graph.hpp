#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bot/types.hpp"

namespace bot {

struct NodeSpec {
  int id = 0;
  std::string name;
  int obs_dim = 0;
  int action_dim = 0;
  bool is_root = false;
};

using Edge = std::pair<int, int>;

// A robot body: sensor/actuator groups as nodes, physical links as edges.
// Immutable once constructed; the constructor enforces that the graph is
// simple, connected and has exactly one root. Node order is token order.
class EmbodimentGraph {
 public:
  EmbodimentGraph(std::vector<NodeSpec> nodes, std::vector<Edge> edges);

  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  const NodeSpec& node(int i) const { return nodes_.at(static_cast<size_t>(i)); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_.at(static_cast<size_t>(i)); }
  int root() const { return root_; }

  int total_obs_dim() const;
  int total_action_dim() const;
  int max_obs_dim() const;

  // Stable 64-bit fingerprint of topology and node dims (FNV-1a over a
  // canonical serialization). Checkpoints use it to refuse foreign graphs.
  std::uint64_t fingerprint() const;

  // Same topology, nodes renumbered so that old node i becomes perm[i].
  EmbodimentGraph relabeled(const std::vector<int>& perm) const;

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  int root_ = 0;
};

// Symmetric binary n×n matrix with a unit diagonal.
class AttentionMask {
 public:
  AttentionMask() = default;
  // Validates symmetry, unit diagonal and {0,1} entries.
  static AttentionMask from_entries(int n, std::vector<std::uint8_t> entries);
  static AttentionMask identity(int n);
  static AttentionMask all_ones(int n);

  int size() const { return n_; }
  bool operator()(int i, int j) const { return entries_[static_cast<size_t>(i * n_ + j)] != 0; }
  std::int64_t nonzeros() const;
  const std::vector<std::uint8_t>& entries() const { return entries_; }

  bool operator==(const AttentionMask&) const = default;

 private:
  AttentionMask(int n, std::vector<std::uint8_t> entries) : n_(n), entries_(std::move(entries)) {}
  int n_ = 0;
  std::vector<std::uint8_t> entries_;
};

EmbodimentGraph parse_graph(std::string_view document);
EmbodimentGraph load_graph(const std::filesystem::path& path);
std::string to_document(const EmbodimentGraph& g);

IntMatrix adjacency_matrix(const EmbodimentGraph& g);
AttentionMask build_mask(const EmbodimentGraph& g);
IntMatrix shortest_path_matrix(const EmbodimentGraph& g);
int diameter(const EmbodimentGraph& g);

double zero_fraction(const AttentionMask& m);

// Symmetric mask with unit diagonal and floor(zero_fraction·n²) zeros,
// rounded down to an even count so off-diagonal zeros pair up.
AttentionMask random_mask(int n, double zero_fraction, std::uint64_t seed);

// Nodes reachable from `node` in at most `radius` hops over the mask's
// off-diagonal ones, ascending.
std::vector<int> mask_ball(const AttentionMask& m, int node, int radius);

// "n=<int>" followed by one row per line, entries space-separated.
void write_mask(std::ostream& out, const AttentionMask& m);
AttentionMask read_mask(std::istream& in);

struct IndexRange {
  int begin = 0;
  int end = 0;
  int width() const { return end - begin; }
};

struct LayoutEntry {
  std::string quantity;
  int width = 0;
  int node = 0;
};

// Maps flat observation/action vectors (in layout order) onto nodes.
class Allocation {
 public:
  struct Slot {
    std::string quantity;
    int node = 0;
    IndexRange range;
  };

  const std::vector<Slot>& observation_slots() const { return obs_slots_; }
  const std::vector<Slot>& action_slots() const { return act_slots_; }
  const std::vector<IndexRange>& observation_ranges(int node) const { return obs_ranges_.at(static_cast<size_t>(node)); }
  const std::vector<IndexRange>& action_ranges(int node) const { return act_ranges_.at(static_cast<size_t>(node)); }
  int observation_width() const { return obs_width_; }
  int action_width() const { return act_width_; }
  int node_count() const { return static_cast<int>(obs_ranges_.size()); }

  // Node-local observation slice, concatenated in layout order.
  Vector gather_observation(const Vector& obs, int node) const;
  // Writes a node-local action slice back into its flat positions.
  void scatter_action(const Vector& local, int node, Vector& actions) const;
  Vector gather_action(const Vector& actions, int node) const;

 private:
  friend Allocation allocate(const EmbodimentGraph&, const std::vector<LayoutEntry>&, const std::vector<LayoutEntry>&);
  std::vector<Slot> obs_slots_;
  std::vector<Slot> act_slots_;
  std::vector<std::vector<IndexRange>> obs_ranges_;
  std::vector<std::vector<IndexRange>> act_ranges_;
  int obs_width_ = 0;
  int act_width_ = 0;
};

Allocation allocate(const EmbodimentGraph& g, const std::vector<LayoutEntry>& observation_layout,
                    const std::vector<LayoutEntry>& action_layout);

// One "obs"/"act" quantity per node, in node order.
Allocation contiguous_allocation(const EmbodimentGraph& g);

}  // namespace bot
