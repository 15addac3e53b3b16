#pragma once

// Simulated communication layer: spanning-tree topologies, hop-by-hop
// routing and an append-only ledger of every message and its byte size.

#include <resin/core.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

namespace resin {

enum class TopologyMode { StaticConfig, ProximityMst };

struct TreeTopology {
  std::vector<int> nodes;       // ascending
  std::map<int, int> parent;    // every non-root node
  int root = 0;
  TopologyMode derivation = TopologyMode::StaticConfig;

  bool contains(int id) const { return std::binary_search(nodes.begin(), nodes.end(), id); }

  std::vector<int> children(int id) const {
    std::vector<int> out;
    for (const auto& [c, p] : parent)
      if (p == id) out.push_back(c);
    return out;  // map iteration keeps them ascending
  }

  bool adjacent(int a, int b) const {
    const auto ia = parent.find(a);
    const auto ib = parent.find(b);
    return (ia != parent.end() && ia->second == b) || (ib != parent.end() && ib->second == a);
  }

  std::vector<int> path_to_root(int id) const {
    std::vector<int> out{id};
    for (auto it = parent.find(id); it != parent.end(); it = parent.find(it->second)) out.push_back(it->second);
    return out;
  }

  /// Node sequence from `from` to `to` along the tree, both ends included.
  std::vector<int> route(int from, int to) const {
    if (!contains(from) || !contains(to)) throw RoutingError("route endpoint not in topology");
    const auto up = path_to_root(from);
    const auto down = path_to_root(to);
    const std::set<int> on_down(down.begin(), down.end());
    std::vector<int> out;
    for (int n : up) {
      out.push_back(n);
      if (on_down.count(n)) {
        auto it = std::find(down.begin(), down.end(), n);
        for (auto r = std::make_reverse_iterator(it); r != down.rend(); ++r) out.push_back(*r);
        return out;
      }
    }
    throw RoutingError("nodes are not connected");
  }

  /// Pre-order traversal, children in ascending id.
  std::vector<int> depth_first_order() const {
    std::vector<int> out;
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      out.push_back(n);
      auto ch = children(n);
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return out;
  }

  /// Post-order traversal (children before parents), children in ascending id.
  std::vector<int> leaves_to_root_order() const {
    std::vector<int> out;
    auto visit = [&](auto&& self, int n) -> void {
      for (int c : children(n)) self(self, c);
      out.push_back(n);
    };
    visit(visit, root);
    return out;
  }

  /// Throws unless there is exactly one root, no cycles, and every node
  /// reaches the root.
  void validate() const {
    if (nodes.empty()) throw StructuralError("topology has no nodes");
    if (!contains(root)) throw StructuralError("topology root is not a node");
    if (parent.count(root)) throw StructuralError("topology root has a parent");
    if (parent.size() + 1 != nodes.size()) throw StructuralError("topology does not span its nodes");
    for (const auto& [c, p] : parent) {
      if (!contains(c) || !contains(p)) throw StructuralError("topology edge references unknown node");
    }
    for (int n : nodes) {
      std::set<int> seen{n};
      for (auto it = parent.find(n); it != parent.end(); it = parent.find(it->second)) {
        if (!seen.insert(it->second).second) throw StructuralError("topology contains a cycle");
      }
      if (path_to_root(n).back() != root)
        throw StructuralError("topology does not span its nodes");
    }
  }
};

/// Tree from an explicit child -> parent edge list.
inline TreeTopology static_topology(std::vector<int> nodes, int root, const std::vector<std::pair<int, int>>& edges) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  TreeTopology t;
  t.nodes = std::move(nodes);
  t.root = root;
  t.derivation = TopologyMode::StaticConfig;
  for (const auto& [child, par] : edges) {
    if (!t.parent.emplace(child, par).second) throw StructuralError("node has two parents in static topology");
  }
  t.validate();
  return t;
}

/// Minimum spanning trees over Euclidean distance (Kruskal, ties broken by
/// endpoint ids). Edges longer than `max_edge` are not allowed, which may
/// split the sensors into several groups; each group is rooted at its lowest
/// id. Groups are returned ordered by their root.
inline std::vector<TreeTopology> proximity_groups(const std::map<int, Vec2>& positions,
                                                  double max_edge = std::numeric_limits<double>::infinity()) {
  if (positions.empty()) throw StructuralError("topology needs at least one sensor");
  std::vector<int> ids;
  for (const auto& [id, p] : positions) ids.push_back(id);

  std::vector<std::tuple<double, int, int>> edges;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const double d = (positions.at(ids[i]) - positions.at(ids[j])).norm();
      if (d <= max_edge) edges.emplace_back(d, ids[i], ids[j]);
    }
  std::sort(edges.begin(), edges.end());

  std::map<int, int> uf;
  for (int id : ids) uf[id] = id;
  auto find = [&](int x) {
    while (uf[x] != x) x = uf[x] = uf[uf[x]];
    return x;
  };
  std::map<int, std::vector<int>> adjacency;
  for (const auto& [d, a, b] : edges) {
    const int ra = find(a), rb = find(b);
    if (ra == rb) continue;
    uf[std::max(ra, rb)] = std::min(ra, rb);
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  }

  std::map<int, std::vector<int>> members;
  for (int id : ids) members[find(id)].push_back(id);

  std::vector<TreeTopology> out;
  for (auto& [rep, group] : members) {
    TreeTopology t;
    t.nodes = group;
    t.root = group.front();
    t.derivation = TopologyMode::ProximityMst;
    std::vector<int> stack{t.root};
    std::set<int> seen{t.root};
    while (!stack.empty()) {
      const int n = stack.back();
      stack.pop_back();
      for (int m : adjacency[n])
        if (seen.insert(m).second) {
          t.parent[m] = n;
          stack.push_back(m);
        }
    }
    t.validate();
    out.push_back(std::move(t));
  }
  std::sort(out.begin(), out.end(), [](const auto& l, const auto& r) { return l.root < r.root; });
  return out;
}

struct StaticTreeConfig {
  int root = 0;
  std::vector<std::pair<int, int>> edges;  // (child, parent)
};

/// Single spanning tree over all sensors.
inline TreeTopology build_topology(const std::map<int, Vec2>& positions, TopologyMode mode,
                                   const std::optional<StaticTreeConfig>& config = std::nullopt) {
  if (positions.empty()) throw StructuralError("topology needs at least one sensor");
  if (mode == TopologyMode::StaticConfig) {
    if (!config) throw StructuralError("static topology requested without a configured tree");
    std::vector<int> ids;
    for (const auto& [id, p] : positions) ids.push_back(id);
    return static_topology(ids, config->root, config->edges);
  }
  auto groups = proximity_groups(positions);
  return std::move(groups.front());
}

// ---------------------------------------------------------------------------

enum class MessageKind { LocalPdf, FusedPdf, DetectionCounts, PlanBroadcast };

inline std::string_view kind_name(MessageKind k) {
  switch (k) {
    case MessageKind::LocalPdf: return "local-pdf";
    case MessageKind::FusedPdf: return "fused-pdf";
    case MessageKind::DetectionCounts: return "detection-counts";
    case MessageKind::PlanBroadcast: return "plan-broadcast";
  }
  return "unknown";
}

struct MessageRecord {
  int round = 0;
  int from = 0;
  int to = 0;
  MessageKind kind = MessageKind::LocalPdf;
  std::size_t payload_bytes = 0;

  bool operator==(const MessageRecord&) const = default;
};

struct LedgerTotals {
  std::size_t messages = 0;
  std::size_t bytes = 0;
};

/// Append-only record of delivered messages. Delivery is synchronous and in
/// call order.
class MessageLedger {
 public:
  /// Single-hop delivery; endpoints must be tree neighbours.
  MessageRecord send(int round, int from, int to, MessageKind kind, std::size_t payload_bytes,
                     const TreeTopology& topology) {
    if (!topology.adjacent(from, to))
      throw RoutingError("direct send between non-adjacent nodes " + std::to_string(from) + " and " +
                         std::to_string(to));
    records_.push_back({round, from, to, kind, payload_bytes});
    return records_.back();
  }

  /// Multi-hop delivery along the tree path; one record per edge.
  std::vector<MessageRecord> route(int round, int from, int to, MessageKind kind, std::size_t payload_bytes,
                                   const TreeTopology& topology) {
    const auto path = topology.route(from, to);
    std::vector<MessageRecord> out;
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
      out.push_back(send(round, path[i], path[i + 1], kind, payload_bytes, topology));
    return out;
  }

  const std::vector<MessageRecord>& records() const { return records_; }

  LedgerTotals query(int round, MessageKind kind) const {
    LedgerTotals t;
    for (const auto& r : records_)
      if (r.round == round && r.kind == kind) {
        ++t.messages;
        t.bytes += r.payload_bytes;
      }
    return t;
  }

  LedgerTotals total(int round) const {
    LedgerTotals t;
    for (const auto& r : records_)
      if (r.round == round) {
        ++t.messages;
        t.bytes += r.payload_bytes;
      }
    return t;
  }

  void write_csv(std::ostream& os) const {
    os << "round,from,to,kind,bytes\n";
    for (const auto& r : records_)
      os << r.round << ',' << r.from << ',' << r.to << ',' << kind_name(r.kind) << ',' << r.payload_bytes << '\n';
  }

 private:
  std::vector<MessageRecord> records_;
};

// ---------------------------------------------------------------------------
// Fixed-width encoding in host byte order (little-endian on every supported
// target) used by every wire format.

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::vector<unsigned char> take() { return std::move(bytes_); }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : bytes_(b) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw StructuralError("truncated message");
    T v;
    std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), sizeof(T), reinterpret_cast<unsigned char*>(&v));
    pos_ += sizeof(T);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace resin
