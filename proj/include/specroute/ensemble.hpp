#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "specroute/chain.hpp"
#include "specroute/errors.hpp"
#include "specroute/resampling.hpp"

namespace specroute {

enum class LearnerKind { AxisTree, LinearRidge };

struct BaseLearnerSpec {
    LearnerKind kind = LearnerKind::AxisTree;
    int max_depth = 8;
    int min_leaf = 5;
    double reg = 1e-3;           // LinearRidge; applies to every coefficient,
                                 // intercept included (large reg -> centroid rule)
    std::uint64_t seed = 0;

    void validate() const {
        if (max_depth < 1) throw ArgumentError("BaseLearnerSpec: max_depth must be >= 1");
        if (min_leaf < 1) throw ArgumentError("BaseLearnerSpec: min_leaf must be >= 1");
        if (!(reg > 0)) throw ArgumentError("BaseLearnerSpec: reg must be positive");
    }
};

namespace detail {

struct TreeNode {
    int feature = -1;            // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int8_t leaf_value = 1;  // +1 / -1
};

}  // namespace detail

// One trained predictor: either a flat axis-aligned tree or an affine rule.
// Output is hardened to +/-1; the affine score is kept for diagnostics.
struct TrainedLearner {
    LearnerKind kind = LearnerKind::AxisTree;
    std::vector<detail::TreeNode> nodes;   // AxisTree
    std::vector<double> weights;           // LinearRidge, length d0+1 (last = intercept)

    int predict(const double* x) const {
        if (kind == LearnerKind::LinearRidge) {
            double s = weights.back();
            for (std::size_t k = 0; k + 1 < weights.size(); ++k) s += weights[k] * x[k];
            return sign_pm(s);
        }
        int cur = 0;
        while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
            const auto& nd = nodes[static_cast<std::size_t>(cur)];
            cur = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(cur)].leaf_value;
    }

    double score(const double* x) const {
        if (kind == LearnerKind::LinearRidge) {
            double s = weights.back();
            for (std::size_t k = 0; k + 1 < weights.size(); ++k) s += weights[k] * x[k];
            return s;
        }
        return static_cast<double>(predict(x));
    }
};

struct EnsembleModel {
    std::vector<TrainedLearner> learners;
    SchemeKind scheme_tag = SchemeKind::Uniform;
    int d0 = 0;
};

namespace detail {

// greedy Gini splitter; thresholds at midpoints of adjacent distinct values,
// ties broken toward the smallest threshold
struct TreeBuilder {
    const Trajectory& traj;
    const BaseLearnerSpec& spec;
    std::vector<TreeNode> nodes;

    TreeBuilder(const Trajectory& t, const BaseLearnerSpec& s) : traj(t), spec(s) {}

    std::int32_t build(std::vector<long>& idx, long lo, long hi, int depth) {
        const long cnt = hi - lo;
        long pos = 0;
        for (long t = lo; t < hi; ++t)
            if (traj.y[static_cast<std::size_t>(idx[static_cast<std::size_t>(t)])] > 0) ++pos;

        const auto leaf = [&](int value) {
            TreeNode nd;
            nd.leaf_value = static_cast<std::int8_t>(value);
            nodes.push_back(nd);
            return static_cast<std::int32_t>(nodes.size() - 1);
        };
        const int majority = sign_pm(2.0 * static_cast<double>(pos) - static_cast<double>(cnt));
        if (pos == 0 || pos == cnt || depth >= spec.max_depth || cnt < 2 * spec.min_leaf)
            return leaf(majority);

        const int d = traj.d0();
        int best_f = -1;
        double best_thr = 0.0, best_gain = 1e-12;
        const double parent = gini(pos, cnt);
        std::vector<std::pair<double, std::int8_t>> vals(static_cast<std::size_t>(cnt));
        for (int f = 0; f < d; ++f) {
            for (long t = lo; t < hi; ++t) {
                const long i = idx[static_cast<std::size_t>(t)];
                vals[static_cast<std::size_t>(t - lo)] = {traj.row(i)[f], traj.y[static_cast<std::size_t>(i)]};
            }
            std::sort(vals.begin(), vals.end());
            long lpos = 0;
            for (long t = 0; t + 1 < cnt; ++t) {
                if (vals[static_cast<std::size_t>(t)].second > 0) ++lpos;
                if (vals[static_cast<std::size_t>(t)].first == vals[static_cast<std::size_t>(t + 1)].first) continue;
                const long lcnt = t + 1, rcnt = cnt - lcnt;
                if (lcnt < spec.min_leaf || rcnt < spec.min_leaf) continue;
                const double child =
                    (static_cast<double>(lcnt) * gini(lpos, lcnt) +
                     static_cast<double>(rcnt) * gini(pos - lpos, rcnt)) / static_cast<double>(cnt);
                const double gain = parent - child;
                const double thr = 0.5 * (vals[static_cast<std::size_t>(t)].first + vals[static_cast<std::size_t>(t + 1)].first);
                if (gain > best_gain + 1e-15 ||
                    (std::fabs(gain - best_gain) <= 1e-15 && best_f >= 0 &&
                     (f < best_f || (f == best_f && thr < best_thr)))) {
                    best_gain = gain;
                    best_f = f;
                    best_thr = thr;
                }
            }
        }
        if (best_f < 0) return leaf(majority);

        const auto mid = std::partition(idx.begin() + lo, idx.begin() + hi, [&](long i) {
            return traj.row(i)[best_f] <= best_thr;
        });
        const long split = mid - idx.begin();
        if (split == lo || split == hi) return leaf(majority);

        TreeNode nd;
        nd.feature = best_f;
        nd.threshold = best_thr;
        nodes.push_back(nd);
        const auto self = static_cast<std::int32_t>(nodes.size() - 1);
        const auto lchild = build(idx, lo, split, depth + 1);
        const auto rchild = build(idx, split, hi, depth + 1);
        nodes[static_cast<std::size_t>(self)].left = lchild;
        nodes[static_cast<std::size_t>(self)].right = rchild;
        return self;
    }

    static double gini(long pos, long cnt) {
        const double p = static_cast<double>(pos) / static_cast<double>(cnt);
        return 2.0 * p * (1.0 - p);
    }
};

// (X^T X + reg I) w = X^T y over the intercept-augmented design, solved by
// Cholesky; dimensions stay tiny (d0+1)
inline std::vector<double> ridge_solve(const Trajectory& traj, const std::vector<long>& idx,
                                       double reg) {
    const int d = traj.d0() + 1;
    std::vector<double> G(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> b(static_cast<std::size_t>(d), 0.0);
    std::vector<double> row(static_cast<std::size_t>(d));
    for (long i : idx) {
        const double* xi = traj.row(i);
        for (int k = 0; k + 1 < d; ++k) row[static_cast<std::size_t>(k)] = xi[k];
        row[static_cast<std::size_t>(d) - 1] = 1.0;
        const double yi = traj.y[static_cast<std::size_t>(i)];
        for (int a = 0; a < d; ++a) {
            b[static_cast<std::size_t>(a)] += row[static_cast<std::size_t>(a)] * yi;
            for (int c = a; c < d; ++c)
                G[static_cast<std::size_t>(a) * d + c] += row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(c)];
        }
    }
    for (int a = 0; a < d; ++a) G[static_cast<std::size_t>(a) * d + a] += reg;

    // in-place upper Cholesky
    for (int a = 0; a < d; ++a) {
        for (int c = 0; c < a; ++c) {
            const double l = G[static_cast<std::size_t>(c) * d + a];
            for (int k = a; k < d; ++k)
                G[static_cast<std::size_t>(a) * d + k] -= l * G[static_cast<std::size_t>(c) * d + k];
        }
        const double piv = G[static_cast<std::size_t>(a) * d + a];
        if (piv <= 0) throw ConvergenceError("ridge_solve: Gram matrix not positive definite", piv);
        const double inv = 1.0 / std::sqrt(piv);
        for (int k = a; k < d; ++k) G[static_cast<std::size_t>(a) * d + k] *= inv;
    }
    // G now upper-triangular R with R^T R = original; solve R^T z = b, R w = z
    std::vector<double> w(b);
    for (int a = 0; a < d; ++a) {
        for (int c = 0; c < a; ++c) w[static_cast<std::size_t>(a)] -= G[static_cast<std::size_t>(c) * d + a] * w[static_cast<std::size_t>(c)];
        w[static_cast<std::size_t>(a)] /= G[static_cast<std::size_t>(a) * d + a];
    }
    for (int a = d - 1; a >= 0; --a) {
        for (int c = a + 1; c < d; ++c) w[static_cast<std::size_t>(a)] -= G[static_cast<std::size_t>(a) * d + c] * w[static_cast<std::size_t>(c)];
        w[static_cast<std::size_t>(a)] /= G[static_cast<std::size_t>(a) * d + a];
    }
    return w;
}

inline TrainedLearner train_one(const Trajectory& traj, const std::vector<long>& idx,
                                const BaseLearnerSpec& spec) {
    if (idx.empty()) throw DataError("train: empty subsample");
    TrainedLearner out;
    out.kind = spec.kind;

    bool any_pos = false, any_neg = false;
    for (long i : idx) (traj.y[static_cast<std::size_t>(i)] > 0 ? any_pos : any_neg) = true;
    if (!(any_pos && any_neg)) {
        // single-class subsample: constant classifier of that class
        out.kind = LearnerKind::AxisTree;
        detail::TreeNode nd;
        nd.leaf_value = any_pos ? 1 : -1;
        out.nodes.push_back(nd);
        return out;
    }

    if (spec.kind == LearnerKind::LinearRidge) {
        out.weights = ridge_solve(traj, idx, spec.reg);
        return out;
    }
    TreeBuilder tb(traj, spec);
    std::vector<long> work(idx);
    tb.build(work, 0, static_cast<long>(work.size()), 0);
    // build() appends parent before children, so node 0 is the root
    out.nodes = std::move(tb.nodes);
    return out;
}

}  // namespace detail

inline EnsembleModel train(const Trajectory& traj, const SubsampleSet& subs,
                           const BaseLearnerSpec& spec) {
    spec.validate();
    if (subs.per_learner.empty()) throw DataError("train: no subsamples");
    EnsembleModel model;
    model.scheme_tag = subs.scheme.kind;
    model.d0 = traj.d0();
    model.learners.reserve(subs.per_learner.size());
    for (const auto& idx : subs.per_learner)
        model.learners.push_back(detail::train_one(traj, idx, spec));
    return model;
}

inline double margin(const EnsembleModel& model, const double* x) {
    if (model.learners.empty()) throw DataError("margin: untrained model");
    long s = 0;
    for (const auto& lr : model.learners) s += lr.predict(x);
    return static_cast<double>(s) / static_cast<double>(model.learners.size());
}

inline int predict(const EnsembleModel& model, const double* x) {
    return sign_pm(margin(model, x));
}

// per-learner vote matrix for covariance diagnostics: votes[j*n_eval + t]
inline std::vector<std::int8_t> vote_matrix(const EnsembleModel& model, const Trajectory& eval) {
    const long n = eval.n();
    const auto m = static_cast<long>(model.learners.size());
    std::vector<std::int8_t> votes(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    for (long j = 0; j < m; ++j) {
        const auto& lr = model.learners[static_cast<std::size_t>(j)];
        for (long t = 0; t < n; ++t)
            votes[static_cast<std::size_t>(j) * static_cast<std::size_t>(n) + static_cast<std::size_t>(t)] =
                static_cast<std::int8_t>(lr.predict(eval.row(t)));
    }
    return votes;
}

// versioned binary model file: magic, version, counts, then per-learner records
inline void save_model(const EnsembleModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_model: cannot open " + path);
    const char magic[8] = {'S', 'R', 'M', 'D', 'L', '0', '1', '\n'};
    os.write(magic, 8);
    auto put_i64 = [&](std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
    put_i64(static_cast<std::int64_t>(model.learners.size()));
    put_i64(model.d0);
    put_i64(static_cast<std::int64_t>(model.scheme_tag));
    for (const auto& lr : model.learners) {
        put_i64(lr.kind == LearnerKind::LinearRidge ? 1 : 0);
        if (lr.kind == LearnerKind::LinearRidge) {
            put_i64(static_cast<std::int64_t>(lr.weights.size()));
            os.write(reinterpret_cast<const char*>(lr.weights.data()),
                     static_cast<std::streamsize>(lr.weights.size() * sizeof(double)));
        } else {
            put_i64(static_cast<std::int64_t>(lr.nodes.size()));
            for (const auto& nd : lr.nodes) {
                put_i64(nd.feature);
                os.write(reinterpret_cast<const char*>(&nd.threshold), 8);
                put_i64(nd.left);
                put_i64(nd.right);
                put_i64(nd.leaf_value);
            }
        }
    }
    if (!os) throw IoError("save_model: write failed for " + path);
}

inline EnsembleModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_model: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "SRMDL01\n", 8) != 0)
        throw IoError("load_model: bad magic in " + path);
    auto get_i64 = [&]() {
        std::int64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    EnsembleModel model;
    const std::int64_t m = get_i64();
    model.d0 = static_cast<int>(get_i64());
    model.scheme_tag = static_cast<SchemeKind>(get_i64());
    if (m < 0 || m > (1 << 24)) throw IoError("load_model: implausible learner count");
    model.learners.resize(static_cast<std::size_t>(m));
    for (auto& lr : model.learners) {
        lr.kind = get_i64() == 1 ? LearnerKind::LinearRidge : LearnerKind::AxisTree;
        const std::int64_t cnt = get_i64();
        if (cnt < 0 || cnt > (1 << 26)) throw IoError("load_model: implausible record size");
        if (lr.kind == LearnerKind::LinearRidge) {
            lr.weights.resize(static_cast<std::size_t>(cnt));
            is.read(reinterpret_cast<char*>(lr.weights.data()),
                    static_cast<std::streamsize>(lr.weights.size() * sizeof(double)));
        } else {
            lr.nodes.resize(static_cast<std::size_t>(cnt));
            for (auto& nd : lr.nodes) {
                nd.feature = static_cast<int>(get_i64());
                is.read(reinterpret_cast<char*>(&nd.threshold), 8);
                nd.left = static_cast<std::int32_t>(get_i64());
                nd.right = static_cast<std::int32_t>(get_i64());
                nd.leaf_value = static_cast<std::int8_t>(get_i64());
            }
        }
    }
    if (!is) throw IoError("load_model: truncated file " + path);
    return model;
}

}  // namespace specroute
