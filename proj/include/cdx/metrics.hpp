#pragma once

/**
 * Certainty metrics over reasoning paths.
 *
 * Given the answers (and optionally rewards / log-probs) of the paths a
 * reasoning program has expanded so far, this module computes the signals a
 * scheduler can act on: the normalized entropy certaindex, reward-based
 * certaindex, and the auxiliary length / log-probability signals.
 *
 * Everything here is a pure function over immutable inputs.
 */

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdx::metrics {

// ============================================================================
// Clustering
// ============================================================================

struct AnswerCluster {
    std::string label;  // representative answer (first seen, already trimmed)
    int size = 0;       // number of paths in the cluster, >= 1
};

/// Answer groups for one program, in first-seen order.
struct Clustering {
    std::vector<AnswerCluster> clusters;
    int total = 0;  // n, total path count; equals the sum of cluster sizes

    int group_count() const { return static_cast<int>(clusters.size()); }
};

/// Surrounding-whitespace trim used everywhere answers are compared.
std::string_view trim(std::string_view s);

/// Group answers by trimmed exact match. Throws on an empty input.
Clustering cluster_exact(std::span<const std::string> answers);

using SimilarityFn = std::function<double(std::string_view, std::string_view)>;

/// Character-trigram Jaccard similarity in [0,1]; the default stand-in for an
/// embedding model when answers are open-ended.
double trigram_jaccard(std::string_view a, std::string_view b);

/// Single-linkage clustering: two answers share a cluster iff they are
/// connected by a chain of pairs with similarity >= cutoff.
Clustering cluster_similarity(std::span<const std::string> answers,
                              const SimilarityFn& similarity, double cutoff);

// ============================================================================
// Entropy certaindex
// ============================================================================

/// H = -sum_i (|C_i|/n) ln (|C_i|/n). 0 <= H <= ln n.
double semantic_entropy(const Clustering& c);

/// Normalized certainty (ln n - H) / ln n, clamped to [0,1].
/// A single path (n = 1) is defined as fully certain: 1.0.
double certaindex_entropy(const Clustering& c);

// ============================================================================
// Reward certaindex
// ============================================================================

enum class RewardAggregation { Mean, Max };

struct RewardSet {
    std::vector<double> rewards;  // each in [0,1], non-empty
    RewardAggregation aggregation = RewardAggregation::Mean;
};

double certaindex_reward(const RewardSet& r);

// ============================================================================
// Signal vectors and combined thresholds
// ============================================================================

enum class SignalKind { CertaindexEntropy, CertaindexReward, MeanOutputLength, MeanNormLogprob };

const char* signal_name(SignalKind kind);

/// The signals observed for one program at one knob point. Absent fields were
/// not measurable for the archetype (e.g. no reward model).
/// For chain-of-thought programs the certaindex_entropy slot carries the
/// sliding-window consistency score, which plays the same [0,1] certainty role.
struct SignalVector {
    std::optional<double> certaindex_entropy;
    std::optional<double> certaindex_reward;
    std::optional<double> mean_output_length;
    std::optional<double> mean_norm_logprob;

    std::optional<double> get(SignalKind kind) const;
    bool any() const {
        return certaindex_entropy || certaindex_reward || mean_output_length || mean_norm_logprob;
    }
};

enum class ThresholdDir { GreaterEq, LessEq };

struct SignalThreshold {
    SignalKind signal = SignalKind::CertaindexEntropy;
    double cutoff = 0.0;
    // Certainty signals use GreaterEq; length/log-prob callers pick a direction.
    ThresholdDir dir = ThresholdDir::GreaterEq;
};

/// True iff every configured threshold is met (inclusive comparison).
/// An empty threshold set is vacuously true. Throws if a threshold references
/// a signal absent from s.
bool combined_meets_thresholds(const SignalVector& s, std::span<const SignalThreshold> thresholds);

// ============================================================================
// Alternative signals
// ============================================================================

struct PathLogProb {
    double sum_logprob = 0.0;  // <= 0
    long token_count = 0;      // >= 1
};

/// Mean over paths of (sum_logprob / token_count).
double mean_norm_logprob(std::span<const PathLogProb> paths);

}  // namespace cdx::metrics
