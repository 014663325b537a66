#include "cdx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace cdx::metrics {

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

Clustering cluster_exact(std::span<const std::string> answers) {
    if (answers.empty()) throw std::invalid_argument("cluster_exact: empty answer set");
    Clustering out;
    out.total = static_cast<int>(answers.size());
    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(answers.size());
    for (const auto& raw : answers) {
        const std::string_view key = trim(raw);
        auto [it, inserted] = index.emplace(key, out.clusters.size());
        if (inserted) {
            out.clusters.push_back({std::string(key), 1});
        } else {
            ++out.clusters[it->second].size;
        }
    }
    return out;
}

double trigram_jaccard(std::string_view a, std::string_view b) {
    a = trim(a);
    b = trim(b);
    if (a == b) return 1.0;
    const auto grams = [](std::string_view s) {
        std::set<std::string> g;
        if (s.size() < 3) {
            if (!s.empty()) g.emplace(s);
            return g;
        }
        for (std::size_t i = 0; i + 3 <= s.size(); ++i) g.emplace(s.substr(i, 3));
        return g;
    };
    const auto ga = grams(a);
    const auto gb = grams(b);
    if (ga.empty() && gb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    const std::size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);  // keep earliest index as root
    }
};

}  // namespace

Clustering cluster_similarity(std::span<const std::string> answers, const SimilarityFn& similarity,
                              double cutoff) {
    if (answers.empty()) throw std::invalid_argument("cluster_similarity: empty answer set");
    if (cutoff < 0.0 || cutoff > 1.0)
        throw std::invalid_argument("cluster_similarity: cutoff outside [0,1]");
    const int n = static_cast<int>(answers.size());
    UnionFind uf(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (uf.find(i) == uf.find(j)) continue;
            if (similarity(answers[i], answers[j]) >= cutoff) uf.unite(i, j);
        }
    }
    Clustering out;
    out.total = n;
    std::unordered_map<int, std::size_t> root_to_cluster;
    for (int i = 0; i < n; ++i) {
        const int root = uf.find(i);
        auto [it, inserted] = root_to_cluster.emplace(root, out.clusters.size());
        if (inserted) {
            out.clusters.push_back({std::string(trim(answers[i])), 1});
        } else {
            ++out.clusters[it->second].size;
        }
    }
    return out;
}

double semantic_entropy(const Clustering& c) {
    if (c.total < 1 || c.clusters.empty())
        throw std::invalid_argument("semantic_entropy: invalid clustering");
    const double n = static_cast<double>(c.total);
    double h = 0.0;
    for (const auto& cl : c.clusters) {
        if (cl.size < 1) throw std::invalid_argument("semantic_entropy: empty cluster");
        const double p = static_cast<double>(cl.size) / n;
        h -= p * std::log(p);
    }
    return std::max(0.0, h);
}

double certaindex_entropy(const Clustering& c) {
    if (c.total == 1) return 1.0;  // one path, nothing to disagree with
    const double log_n = std::log(static_cast<double>(c.total));
    const double h = semantic_entropy(c);
    return std::clamp((log_n - h) / log_n, 0.0, 1.0);
}

double certaindex_reward(const RewardSet& r) {
    if (r.rewards.empty()) throw std::invalid_argument("certaindex_reward: empty reward set");
    for (double v : r.rewards) {
        if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("certaindex_reward: reward outside [0,1]");
    }
    if (r.aggregation == RewardAggregation::Max)
        return *std::max_element(r.rewards.begin(), r.rewards.end());
    return std::accumulate(r.rewards.begin(), r.rewards.end(), 0.0) /
           static_cast<double>(r.rewards.size());
}

const char* signal_name(SignalKind kind) {
    switch (kind) {
        case SignalKind::CertaindexEntropy: return "certaindex_entropy";
        case SignalKind::CertaindexReward: return "certaindex_reward";
        case SignalKind::MeanOutputLength: return "mean_output_length";
        case SignalKind::MeanNormLogprob: return "mean_norm_logprob";
    }
    return "?";
}

std::optional<double> SignalVector::get(SignalKind kind) const {
    switch (kind) {
        case SignalKind::CertaindexEntropy: return certaindex_entropy;
        case SignalKind::CertaindexReward: return certaindex_reward;
        case SignalKind::MeanOutputLength: return mean_output_length;
        case SignalKind::MeanNormLogprob: return mean_norm_logprob;
    }
    return std::nullopt;
}

bool combined_meets_thresholds(const SignalVector& s,
                               std::span<const SignalThreshold> thresholds) {
    for (const auto& t : thresholds) {
        const auto value = s.get(t.signal);
        if (!value) {
            throw std::invalid_argument(std::string("combined_meets_thresholds: signal '") +
                                        signal_name(t.signal) + "' absent");
        }
        const bool ok = t.dir == ThresholdDir::GreaterEq ? *value >= t.cutoff : *value <= t.cutoff;
        if (!ok) return false;
    }
    return true;
}

double mean_norm_logprob(std::span<const PathLogProb> paths) {
    if (paths.empty()) throw std::invalid_argument("mean_norm_logprob: no paths");
    double sum = 0.0;
    for (const auto& p : paths) {
        if (p.token_count < 1) throw std::invalid_argument("mean_norm_logprob: zero token count");
        sum += p.sum_logprob / static_cast<double>(p.token_count);
    }
    return sum / static_cast<double>(paths.size());
}

}  // namespace cdx::metrics
