#pragma once

/**
 * Distributional stopping theory.
 *
 * Models a reasoning chain as a sequence of categorical distributions over M
 * answer groups and provides:
 *   - total variation distance and window mixtures,
 *   - the sample-size bound for testing stationarity to epsilon accuracy,
 *   - the empirical epsilon-accuracy stopping test over observed samples,
 *   - a brute-force checker for the mixture-equivalence lemma, used as a
 *     property-test oracle.
 */

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cdx::theory {

struct CategoricalDistribution {
    std::vector<double> mass;  // entries >= 0, sum to 1 within 1e-9

    int groups() const { return static_cast<int>(mass.size()); }
    void validate() const;
};

struct DistributionSequence {
    std::vector<CategoricalDistribution> dists;  // index = reasoning step, all same M

    int size() const { return static_cast<int>(dists.size()); }
    void validate() const;
};

/// Empirical mixture over a sample window: group occurrence counts / total.
struct EmpiricalMixture {
    std::vector<long> counts;
    long total = 0;

    CategoricalDistribution to_distribution() const;
};

/// TV(p,q) = (1/2) sum_i |p_i - q_i|; equals the sup over subsets of the
/// group space for categorical distributions.
double tv_distance(const CategoricalDistribution& p, const CategoricalDistribution& q);

/// Mean of the k member distributions at indices i+1 .. i+k (0-based: dists
/// [i, i+k)). Throws when the window leaves the sequence.
CategoricalDistribution mixture(const DistributionSequence& seq, int i, int k);

/// Smallest k >= 2 such that 2^(M+2) * k * exp(-(k-1) eps^2 / 2) <= delta.
/// This is the explicit tail bound behind the concentration lemma; the search
/// is monotone so the result is exact.
std::int64_t required_probes(int groups, double epsilon, double delta);

/// Empirical epsilon-accuracy stopping test with window length k over the
/// observed group indices. The anchor slides to the latest feasible position
/// (samples.size() - 2k). Returns nullopt while fewer than 2k samples exist.
/// True iff every empirical mixture pair of window length k (and k-1) is
/// within epsilon/3 in TV.
std::optional<bool> epsilon_stop_test(std::span<const int> samples, int k, double epsilon);

/// Checks the implication of the mixture-equivalence lemma by direct
/// computation: if all window mixtures of lengths k and k-1 anchored at i are
/// TV-identical, then the individual distributions i+1 .. i+2k-1 are equal.
/// Returns true iff the implication holds for this sequence (vacuously true
/// when the premise fails).
bool lemma2_bruteforce_check(const DistributionSequence& seq, int i, int k);

struct SweepResult {
    long sequences_checked = 0;
    long counterexamples = 0;
};

/// Exhaustive sweep of lemma2_bruteforce_check over all sequences of length
/// 2k-1 whose distributions have entries on the grid {0, 1/q, ..., 1}
/// (quarters when grid_steps = 4), for all M <= max_groups, k <= max_window.
SweepResult lemma2_grid_sweep(int max_groups, int max_window, int grid_steps = 4);

struct ConcentrationResult {
    std::int64_t k = 0;         // required_probes for the given parameters
    int replications = 0;
    int covered = 0;            // replications where every window TV <= eps/3
    double coverage() const { return replications ? double(covered) / replications : 0.0; }
};

/// Monte-Carlo validation of the concentration bound: stationary chains with
/// a random stationary distribution per replication, one sample per step,
/// counting how often TV(stationary, empirical mixture) <= eps/3 holds for
/// every window (l = i+1..i+k, t = k-1, k).
ConcentrationResult concentration_coverage(int groups, double epsilon, double delta,
                                           int replications, std::uint64_t seed);

}  // namespace cdx::theory
