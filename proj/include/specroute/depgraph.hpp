#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <queue>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "specroute/chain.hpp"
#include "specroute/errors.hpp"

namespace specroute {

// Unweighted empirical dependency graph over sample indices, stored both as
// a sorted edge list (the serialization format and test surface) and as CSR
// adjacency (the matvec path). Simple by construction: no self-loops, no
// multi-edges.

struct DependencyGraph {
    long n_nodes = 0;
    std::vector<std::pair<long, long>> edges;   // i < j, sorted, unique
    std::vector<long> degrees;

    // CSR mirror of `edges`, filled by finalize().
    std::vector<long> adj_offsets;
    std::vector<long> adj;
    std::vector<double> inv_sqrt_deg;

    long min_degree() const {
        long md = n_nodes > 0 ? degrees[0] : 0;
        for (long d : degrees) md = std::min(md, d);
        return md;
    }

    void finalize() {
        degrees.assign(static_cast<size_t>(n_nodes), 0);
        for (const auto& [i, j] : edges) {
            ++degrees[static_cast<size_t>(i)];
            ++degrees[static_cast<size_t>(j)];
        }
        adj_offsets.assign(static_cast<size_t>(n_nodes) + 1, 0);
        for (long v = 0; v < n_nodes; ++v)
            adj_offsets[static_cast<size_t>(v) + 1] =
                adj_offsets[static_cast<size_t>(v)] + degrees[static_cast<size_t>(v)];
        adj.resize(static_cast<size_t>(adj_offsets.back()));
        std::vector<long> cursor(adj_offsets.begin(), adj_offsets.end() - 1);
        for (const auto& [i, j] : edges) {
            adj[static_cast<size_t>(cursor[static_cast<size_t>(i)]++)] = j;
            adj[static_cast<size_t>(cursor[static_cast<size_t>(j)]++)] = i;
        }
        inv_sqrt_deg.resize(static_cast<size_t>(n_nodes));
        for (long v = 0; v < n_nodes; ++v) {
            const long d = degrees[static_cast<size_t>(v)];
            inv_sqrt_deg[static_cast<size_t>(v)] =
                d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 0.0;
        }
    }
};

struct TemporalWindow { int tau = 1; };
struct SpatialKnn { int k = 4; };
struct FeatureKnn { int k = 10; };
struct GraphRecipe;
struct UnionRecipe { std::vector<GraphRecipe> parts; };

struct GraphRecipe {
    std::variant<TemporalWindow, SpatialKnn, FeatureKnn, UnionRecipe> mode =
        TemporalWindow{};
};

namespace detail {

// Compact kd-tree for exact k-NN queries in low dimension. Median split on
// the widest-spread axis; ties in distance broken toward the smaller sample
// index so graph construction is deterministic.
class KdTree {
public:
    KdTree(const double* pts, long n, int dim) : pts_(pts), n_(n), dim_(dim) {
        perm_.resize(static_cast<size_t>(n));
        std::iota(perm_.begin(), perm_.end(), 0L);
        nodes_.reserve(static_cast<size_t>(2 * n / kLeaf + 2));
        root_ = build(0, n);
    }

    // k nearest neighbors of point `q`, excluding sample `self`.
    void query(const double* q, long self, int k,
               std::vector<long>& out) const {
        // bounded max-heap of (dist2, idx)
        heap_.clear();
        search(root_, q, self, k);
        out.resize(heap_.size());
        for (size_t i = heap_.size(); i-- > 0;) {
            out[i] = heap_.front().second;
            std::pop_heap(heap_.begin(), heap_.begin() + static_cast<long>(i) + 1);
        }
    }

private:
    static constexpr long kLeaf = 24;

    struct Node {
        double split = 0.0;
        int axis = -1;          // -1 marks a leaf
        long begin = 0, end = 0;
        int left = -1, right = -1;
    };

    int build(long begin, long end) {
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin <= kLeaf) {
            nodes_.push_back(node);
            return static_cast<int>(nodes_.size()) - 1;
        }
        int axis = 0;
        double best_spread = -1.0;
        for (int a = 0; a < dim_; ++a) {
            double lo = pts_[perm_[static_cast<size_t>(begin)] * dim_ + a];
            double hi = lo;
            for (long i = begin + 1; i < end; ++i) {
                const double val = pts_[perm_[static_cast<size_t>(i)] * dim_ + a];
                lo = std::min(lo, val);
                hi = std::max(hi, val);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                axis = a;
            }
        }
        const long mid = begin + (end - begin) / 2;
        std::nth_element(perm_.begin() + begin, perm_.begin() + mid,
                         perm_.begin() + end, [&](long a, long b) {
                             return pts_[a * dim_ + axis] < pts_[b * dim_ + axis];
                         });
        node.axis = axis;
        node.split = pts_[perm_[static_cast<size_t>(mid)] * dim_ + axis];
        nodes_.push_back(node);
        const int id = static_cast<int>(nodes_.size()) - 1;
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes_[static_cast<size_t>(id)].left = l;
        nodes_[static_cast<size_t>(id)].right = r;
        return id;
    }

    void consider(long idx, const double* q, long self, int k) const {
        if (idx == self) return;
        double d2 = 0.0;
        const double* p = pts_ + idx * dim_;
        for (int a = 0; a < dim_; ++a) {
            const double diff = p[a] - q[a];
            d2 += diff * diff;
        }
        const std::pair<double, long> cand{d2, idx};
        if (static_cast<int>(heap_.size()) < k) {
            heap_.push_back(cand);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (cand < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = cand;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    void search(int id, const double* q, long self, int k) const {
        const Node& node = nodes_[static_cast<size_t>(id)];
        if (node.axis < 0) {
            for (long i = node.begin; i < node.end; ++i)
                consider(perm_[static_cast<size_t>(i)], q, self, k);
            return;
        }
        const double diff = q[node.axis] - node.split;
        const int near = diff < 0.0 ? node.left : node.right;
        const int far = diff < 0.0 ? node.right : node.left;
        search(near, q, self, k);
        if (static_cast<int>(heap_.size()) < k ||
            diff * diff <= heap_.front().first)
            search(far, q, self, k);
    }

    const double* pts_;
    long n_;
    int dim_;
    std::vector<long> perm_;
    std::vector<Node> nodes_;
    int root_ = -1;
    mutable std::vector<std::pair<double, long>> heap_;
};

inline void dedupe_edges(std::vector<std::pair<long, long>>& edges) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

inline void build_temporal(long n, int tau,
                           std::vector<std::pair<long, long>>& edges) {
    if (tau < 1) throw ConfigError("temporal window tau must be >= 1");
    for (long i = 0; i < n; ++i)
        for (long j = i + 1; j <= i + tau && j < n; ++j)
            edges.emplace_back(i, j);
}

inline void build_feature_knn(const Trajectory& traj, int k,
                              std::vector<std::pair<long, long>>& edges) {
    const long n = traj.n();
    if (n < k + 1) throw ConfigError("FeatureKnn requires n >= k+1");
    KdTree tree(traj.x.data(), n, traj.d0());
    std::vector<long> nbrs;
    for (long i = 0; i < n; ++i) {
        tree.query(traj.row(i), i, k, nbrs);
        for (long j : nbrs)
            edges.emplace_back(std::min(i, j), std::max(i, j));
    }
    dedupe_edges(edges);  // symmetrize by union
}

inline void build_spatial_knn(const Trajectory& traj, int k,
                              std::vector<std::pair<long, long>>& edges) {
    if (traj.config.topology != Topology::Lattice2D)
        throw ConfigError("SpatialKnn requires Lattice2D topology");
    const long side = traj.config.side;
    std::vector<std::pair<long, long>> ring;  // (dist2, candidate index)
    for (long i = 0; i < traj.n(); ++i) {
        const long r0 = i / side, c0 = i % side;
        long radius = 1;
        ring.clear();
        while (true) {
            ring.clear();
            for (long r = std::max(0L, r0 - radius);
                 r <= std::min(side - 1, r0 + radius); ++r)
                for (long c = std::max(0L, c0 - radius);
                     c <= std::min(side - 1, c0 + radius); ++c) {
                    if (r == r0 && c == c0) continue;
                    const long d2 = (r - r0) * (r - r0) + (c - c0) * (c - c0);
                    if (d2 <= radius * radius) ring.emplace_back(d2, r * side + c);
                }
            if (static_cast<int>(ring.size()) >= k || radius >= 2 * side) break;
            ++radius;
        }
        std::sort(ring.begin(), ring.end());  // ties resolve to smaller index
        const int take = std::min<int>(k, static_cast<int>(ring.size()));
        for (int t = 0; t < take; ++t) {
            const long j = ring[static_cast<size_t>(t)].second;
            edges.emplace_back(std::min(i, j), std::max(i, j));
        }
    }
    dedupe_edges(edges);
}

inline void collect_edges(const Trajectory& traj, const GraphRecipe& recipe,
                          std::vector<std::pair<long, long>>& edges) {
    if (const auto* tw = std::get_if<TemporalWindow>(&recipe.mode)) {
        build_temporal(traj.n(), tw->tau, edges);
    } else if (const auto* sk = std::get_if<SpatialKnn>(&recipe.mode)) {
        build_spatial_knn(traj, sk->k, edges);
    } else if (const auto* fk = std::get_if<FeatureKnn>(&recipe.mode)) {
        build_feature_knn(traj, fk->k, edges);
    } else {
        const auto& u = std::get<UnionRecipe>(recipe.mode);
        if (u.parts.empty()) throw ConfigError("Union recipe must be non-empty");
        for (const auto& part : u.parts) collect_edges(traj, part, edges);
    }
}

} // namespace detail

inline DependencyGraph build_graph(const Trajectory& traj,
                                   const GraphRecipe& recipe) {
    DependencyGraph g;
    g.n_nodes = traj.n();
    detail::collect_edges(traj, recipe, g.edges);
    detail::dedupe_edges(g.edges);
    g.finalize();
    return g;
}

// Allocation-free matvec core used by the eigensolvers.
inline void laplacian_matvec_into(const DependencyGraph& g, const double* x,
                                  double* y) {
    const long n = g.n_nodes;
    for (long v = 0; v < n; ++v) {
        double acc = 0.0;
        const long begin = g.adj_offsets[static_cast<size_t>(v)];
        const long end = g.adj_offsets[static_cast<size_t>(v) + 1];
        for (long e = begin; e < end; ++e) {
            const long u = g.adj[static_cast<size_t>(e)];
            acc += x[u] * g.inv_sqrt_deg[static_cast<size_t>(u)];
        }
        y[v] = x[v] - g.inv_sqrt_deg[static_cast<size_t>(v)] * acc;
    }
}

// y = L~ x with L~ = I - D^{-1/2} W D^{-1/2}, evaluated edge-wise.
inline std::vector<double> normalized_laplacian_matvec(
    const DependencyGraph& g, const std::vector<double>& vec) {
    if (static_cast<long>(vec.size()) != g.n_nodes)
        throw ArgumentError("matvec: vector length != n_nodes");
    if (g.min_degree() < 1)
        throw StructuralError("matvec: graph has a degree-0 node");
    std::vector<double> out(vec.size());
    laplacian_matvec_into(g, vec.data(), out.data());
    return out;
}

inline long cut_edges(const DependencyGraph& g,
                      const std::vector<int>& assignment) {
    if (static_cast<long>(assignment.size()) != g.n_nodes)
        throw ArgumentError("cut_edges: assignment length != n_nodes");
    int p_max = 0;
    for (int a : assignment) {
        if (a < 0) throw ArgumentError("cut_edges: negative partition label");
        p_max = std::max(p_max, a);
    }
    (void)p_max;
    long cut = 0;
    for (const auto& [i, j] : g.edges)
        if (assignment[static_cast<size_t>(i)] != assignment[static_cast<size_t>(j)])
            ++cut;
    return cut;
}

inline bool is_connected(const DependencyGraph& g) {
    if (g.n_nodes == 0) return false;
    std::vector<char> seen(static_cast<size_t>(g.n_nodes), 0);
    std::queue<long> frontier;
    frontier.push(0);
    seen[0] = 1;
    long visited = 1;
    while (!frontier.empty()) {
        const long v = frontier.front();
        frontier.pop();
        const long begin = g.adj_offsets[static_cast<size_t>(v)];
        const long end = g.adj_offsets[static_cast<size_t>(v) + 1];
        for (long e = begin; e < end; ++e) {
            const long u = g.adj[static_cast<size_t>(e)];
            if (!seen[static_cast<size_t>(u)]) {
                seen[static_cast<size_t>(u)] = 1;
                ++visited;
                frontier.push(u);
            }
        }
    }
    return visited == g.n_nodes;
}

inline void save_edge_list(const DependencyGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << "n=" << g.n_nodes << '\n';
    for (const auto& [i, j] : g.edges) out << i << ' ' << j << '\n';
}

inline DependencyGraph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("n=", 0) != 0)
        throw IoError("edge list missing n= header: " + path);
    DependencyGraph g;
    g.n_nodes = std::stol(header.substr(2));
    long i, j;
    while (in >> i >> j) g.edges.emplace_back(i, j);
    detail::dedupe_edges(g.edges);
    g.finalize();
    return g;
}

} // namespace specroute
