#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "telapart/features.hpp"

namespace telapart {

// A partition of the fNode's devices. Clusters hold sorted device ids and the
// cluster list itself is sorted by first member, so equal partitions compare
// equal regardless of construction order.
struct Partition {
    std::vector<std::vector<std::string>> clusters;

    static Partition singletons(std::vector<std::string> device_ids) {
        std::sort(device_ids.begin(), device_ids.end());
        Partition p;
        for (auto& id : device_ids) p.clusters.push_back({std::move(id)});
        return p;
    }

    void canonicalize() {
        for (auto& c : clusters) std::sort(c.begin(), c.end());
        std::sort(clusters.begin(), clusters.end());
    }

    std::size_t device_total() const {
        std::size_t n = 0;
        for (const auto& c : clusters) n += c.size();
        return n;
    }

    bool operator==(const Partition&) const = default;
};

// ---- agglomerative clustering ------------------------------------------------
//
// Bottom-up merging on a similarity matrix. Undefined entries carry no
// evidence and are excluded from linkage aggregation; a cluster pair with no
// defined entry at all gets linkage -inf and never merges. Every merge takes
// the pair with the highest linkage; equal linkages resolve to the pair whose
// merged id set sorts first. Because each linkage value is an aggregate
// (mean, max or min) over entries bounded by the previous global maximum, the
// recorded merge similarities never increase, so the clustering at any
// threshold s_f is a prefix of one fixed merge sequence. The dendrogram trace
// exposes that prefix structure; threshold sweeps cut it instead of
// re-running the merge loop.

struct DendrogramTrace {
    std::vector<std::string> device_ids;  // sorted; leaves of the dendrogram
    struct Merge {
        double similarity;  // linkage value at merge time
        // Cluster contents at merge time, as indices into device_ids.
        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
    };
    std::vector<Merge> merges;  // similarity is non-increasing

    // Partition after applying every merge with linkage >= s_f.
    Partition cut(double s_f) const {
        std::vector<std::vector<std::size_t>> clusters;
        clusters.reserve(device_ids.size());
        for (std::size_t i = 0; i < device_ids.size(); ++i) clusters.push_back({i});
        std::vector<std::size_t> where(device_ids.size());
        for (std::size_t i = 0; i < device_ids.size(); ++i) where[i] = i;
        for (const auto& m : merges) {
            if (m.similarity < s_f) break;
            std::size_t a = where[m.left.front()];
            std::size_t b = where[m.right.front()];
            for (std::size_t idx : clusters[b]) {
                where[idx] = a;
                clusters[a].push_back(idx);
            }
            clusters[b].clear();
        }
        Partition p;
        for (auto& c : clusters) {
            if (c.empty()) continue;
            std::vector<std::string> ids;
            ids.reserve(c.size());
            for (std::size_t idx : c) ids.push_back(device_ids[idx]);
            p.clusters.push_back(std::move(ids));
        }
        p.canonicalize();
        return p;
    }
};

namespace detail {

struct LinkageState {
    Linkage kind;
    // Pairwise aggregates between live clusters, indexed by cluster slot.
    // Average keeps (sum, count); single/complete keep the extreme value and
    // a defined-entry count.
    std::vector<std::vector<double>> value;
    std::vector<std::vector<std::size_t>> count;

    double linkage(std::size_t a, std::size_t b) const {
        if (count[a][b] == 0) return -std::numeric_limits<double>::infinity();
        return kind == Linkage::Average ? value[a][b] / static_cast<double>(count[a][b])
                                        : value[a][b];
    }

    void merge_into(std::size_t a, std::size_t b, std::size_t n_slots) {
        for (std::size_t c = 0; c < n_slots; ++c) {
            if (c == a || c == b) continue;
            std::size_t cnt = count[a][c] + count[b][c];
            double v;
            if (kind == Linkage::Average) {
                v = value[a][c] + value[b][c];
            } else if (count[a][c] == 0) {
                v = value[b][c];
            } else if (count[b][c] == 0) {
                v = value[a][c];
            } else if (kind == Linkage::Single) {
                v = std::max(value[a][c], value[b][c]);
            } else {
                v = std::min(value[a][c], value[b][c]);
            }
            value[a][c] = value[c][a] = v;
            count[a][c] = count[c][a] = cnt;
            count[b][c] = count[c][b] = 0;
        }
    }
};

inline bool id_set_less(const std::vector<std::size_t>& merged_a,
                        const std::vector<std::size_t>& merged_b,
                        const std::vector<std::string>& ids) {
    auto cmp = [&](std::size_t x, std::size_t y) { return ids[x] < ids[y]; };
    return std::lexicographical_compare(merged_a.begin(), merged_a.end(), merged_b.begin(),
                                        merged_b.end(), cmp);
}

}  // namespace detail

inline DendrogramTrace agglomerate_trace(const SimilarityMatrix& sim, Linkage linkage) {
    DendrogramTrace trace;
    trace.device_ids = sim.device_ids;
    const std::size_t n = sim.size();
    if (n == 0) return trace;

    detail::LinkageState state;
    state.kind = linkage;
    state.value.assign(n, std::vector<double>(n, 0.0));
    state.count.assign(n, std::vector<std::size_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && sim.at(i, j)) {
                state.value[i][j] = *sim.at(i, j);
                state.count[i][j] = 1;
            }

    // members[s]: sorted device indices of the live cluster in slot s.
    std::vector<std::vector<std::size_t>> members(n);
    std::vector<bool> live(n, true);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};

    auto merged_ids = [&](std::size_t a, std::size_t b) {
        std::vector<std::size_t> merged(members[a].size() + members[b].size());
        std::merge(members[a].begin(), members[a].end(), members[b].begin(), members[b].end(),
                   merged.begin(),
                   [&](std::size_t x, std::size_t y) { return trace.device_ids[x] < trace.device_ids[y]; });
        return merged;
    };

    for (std::size_t round = 1; round < n; ++round) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t ba = n, bb = n;
        std::vector<std::size_t> best_merged;  // built lazily, only when ties appear
        for (std::size_t a = 0; a < n; ++a) {
            if (!live[a]) continue;
            for (std::size_t b = a + 1; b < n; ++b) {
                if (!live[b]) continue;
                double l = state.linkage(a, b);
                if (l == -std::numeric_limits<double>::infinity()) continue;
                if (l < best) continue;
                if (l > best || ba == n) {
                    best = l;
                    ba = a;
                    bb = b;
                    best_merged.clear();
                    continue;
                }
                // Exact tie: the lexicographically smaller merged id set wins.
                if (best_merged.empty()) best_merged = merged_ids(ba, bb);
                auto merged = merged_ids(a, b);
                if (detail::id_set_less(merged, best_merged, trace.device_ids)) {
                    ba = a;
                    bb = b;
                    best_merged = std::move(merged);
                }
            }
        }
        if (ba == n) break;
        trace.merges.push_back(DendrogramTrace::Merge{best, members[ba], members[bb]});
        state.merge_into(ba, bb, n);
        members[ba] = merged_ids(ba, bb);
        members[bb].clear();
        live[bb] = false;
    }
    return trace;
}

// Merge clusters until the best available linkage drops below s_f.
inline Partition agglomerate(const SimilarityMatrix& sim, double s_f,
                             Linkage linkage = Linkage::Average) {
    return agglomerate_trace(sim, linkage).cut(s_f);
}

// ---- density baseline -----------------------------------------------------------
//
// DBSCAN over the derived distance d = 1 - max(0, sim); undefined similarity
// counts as the maximum distance 1. Noise devices come back as singletons so
// the output is always a full partition.

inline Partition dbscan_partition(const SimilarityMatrix& sim, double eps,
                                  std::size_t min_samples) {
    const std::size_t n = sim.size();
    auto dist = [&](std::size_t i, std::size_t j) {
        if (i == j) return 0.0;
        const auto& s = sim.at(i, j);
        return s ? 1.0 - std::max(0.0, *s) : 1.0;
    };

    std::vector<std::vector<std::size_t>> neigh(n);
    std::vector<bool> core(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            if (dist(i, j) <= eps) neigh[i].push_back(j);
        core[i] = neigh[i].size() >= min_samples;
    }

    std::vector<int> cluster(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || cluster[i] >= 0) continue;
        int id = next++;
        std::vector<std::size_t> queue = {i};
        cluster[i] = id;
        while (!queue.empty()) {
            std::size_t p = queue.back();
            queue.pop_back();
            if (!core[p]) continue;  // border points do not expand
            for (std::size_t q : neigh[p]) {
                if (cluster[q] < 0) {
                    cluster[q] = id;
                    queue.push_back(q);
                }
            }
        }
    }

    Partition out;
    std::vector<std::vector<std::string>> groups(static_cast<std::size_t>(next));
    for (std::size_t i = 0; i < n; ++i) {
        if (cluster[i] < 0)
            out.clusters.push_back({sim.device_ids[i]});  // noise -> singleton
        else
            groups[static_cast<std::size_t>(cluster[i])].push_back(sim.device_ids[i]);
    }
    for (auto& g : groups)
        if (!g.empty()) out.clusters.push_back(std::move(g));
    out.canonicalize();
    return out;
}

}  // namespace telapart
