#include "cdx/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cdx/rng.hpp"

namespace cdx::theory {

namespace {
constexpr double kEqTol = 1e-12;
}

void CategoricalDistribution::validate() const {
    if (mass.empty()) throw std::invalid_argument("distribution: no groups");
    double sum = 0.0;
    for (double p : mass) {
        if (p < 0.0) throw std::invalid_argument("distribution: negative mass");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("distribution: mass does not sum to 1");
}

void DistributionSequence::validate() const {
    if (dists.empty()) throw std::invalid_argument("sequence: empty");
    const int m = dists.front().groups();
    for (const auto& d : dists) {
        d.validate();
        if (d.groups() != m) throw std::invalid_argument("sequence: mixed group counts");
    }
}

CategoricalDistribution EmpiricalMixture::to_distribution() const {
    if (total <= 0) throw std::invalid_argument("empirical mixture: empty window");
    long check = 0;
    for (long c : counts) check += c;
    if (check != total) throw std::invalid_argument("empirical mixture: counts do not sum to total");
    CategoricalDistribution d;
    d.mass.reserve(counts.size());
    for (long c : counts) d.mass.push_back(static_cast<double>(c) / static_cast<double>(total));
    return d;
}

double tv_distance(const CategoricalDistribution& p, const CategoricalDistribution& q) {
    if (p.groups() != q.groups())
        throw std::invalid_argument("tv_distance: dimension mismatch");
    double l1 = 0.0;
    for (std::size_t i = 0; i < p.mass.size(); ++i) l1 += std::abs(p.mass[i] - q.mass[i]);
    return 0.5 * l1;
}

CategoricalDistribution mixture(const DistributionSequence& seq, int i, int k) {
    if (i < 0 || k < 1 || i + k > seq.size())
        throw std::out_of_range("mixture: window outside sequence");
    const int m = seq.dists.front().groups();
    CategoricalDistribution out;
    out.mass.assign(m, 0.0);
    for (int j = 0; j < k; ++j) {
        const auto& d = seq.dists[i + j];
        if (d.groups() != m) throw std::invalid_argument("mixture: mixed group counts");
        for (int g = 0; g < m; ++g) out.mass[g] += d.mass[g];
    }
    for (int g = 0; g < m; ++g) out.mass[g] /= static_cast<double>(k);
    return out;
}

std::int64_t required_probes(int groups, double epsilon, double delta) {
    if (groups < 1) throw std::invalid_argument("required_probes: groups must be >= 1");
    if (epsilon <= 0.0) throw std::invalid_argument("required_probes: epsilon must be > 0");
    if (delta <= 0.0 || delta >= 1.0)
        throw std::invalid_argument("required_probes: delta must be in (0,1)");

    const double c = epsilon * epsilon / 2.0;
    const double log_delta = std::log(delta);
    const auto feasible = [&](std::int64_t k) {
        // log form of 2^(M+2) * k * exp(-(k-1) eps^2 / 2) <= delta
        return (groups + 2) * std::log(2.0) + std::log(static_cast<double>(k)) -
                   (static_cast<double>(k) - 1.0) * c <=
               log_delta;
    };

    if (feasible(2)) return 2;
    // the bound is unimodal in k (rises until k ~ 1/c, then strictly falls),
    // so the first feasible k past 2 lies in the decreasing tail
    std::int64_t lo = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(1.0 / c)) + 1);
    std::int64_t hi = lo;
    while (!feasible(hi)) {
        hi *= 2;
        if (hi > (std::int64_t{1} << 60)) throw std::runtime_error("required_probes: no feasible k");
    }
    while (lo < hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        if (feasible(mid)) hi = mid; else lo = mid + 1;
    }
    return lo;
}

namespace {

// counts over samples[start .. start+len) laid into a caller buffer
void window_counts(std::span<const int> samples, int start, int len, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int t = 0; t < len; ++t) out[static_cast<std::size_t>(samples[start + t])] += 1.0;
    for (auto& v : out) v /= static_cast<double>(len);
}

double tv_raw(std::span<const double> a, std::span<const double> b) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) l1 += std::abs(a[i] - b[i]);
    return 0.5 * l1;
}

}  // namespace

std::optional<bool> epsilon_stop_test(std::span<const int> samples, int k, double epsilon) {
    if (k < 1) throw std::invalid_argument("epsilon_stop_test: k must be >= 1");
    if (epsilon <= 0.0) throw std::invalid_argument("epsilon_stop_test: epsilon must be > 0");
    const int n = static_cast<int>(samples.size());
    if (n < 2 * k) return std::nullopt;  // not enough probes yet
    const int anchor = n - 2 * k;        // latest feasible anchor

    int m = 0;
    for (int s : samples) {
        if (s < 0) throw std::invalid_argument("epsilon_stop_test: negative group index");
        m = std::max(m, s + 1);
    }
    const double limit = epsilon / 3.0;

    std::vector<double> ref(m), probe(m);
    // window length k: anchors anchor and anchor+j, samples (l, l+k]
    window_counts(samples, anchor, k, ref);
    for (int j = 1; j <= k; ++j) {
        window_counts(samples, anchor + j, k, probe);
        if (tv_raw(ref, probe) > limit) return false;
    }
    if (k >= 2) {
        window_counts(samples, anchor, k - 1, ref);
        for (int j = 1; j <= k - 1; ++j) {
            window_counts(samples, anchor + j, k - 1, probe);
            if (tv_raw(ref, probe) > limit) return false;
        }
    }
    return true;
}

bool lemma2_bruteforce_check(const DistributionSequence& seq, int i, int k) {
    if (i < 0 || k < 1 || i + 2 * k > seq.size())
        throw std::out_of_range("lemma2_bruteforce_check: window outside sequence");

    const auto anchor_k = mixture(seq, i, k);
    bool premise = true;
    for (int j = 1; j <= k && premise; ++j) {
        premise = tv_distance(anchor_k, mixture(seq, i + j, k)) <= kEqTol;
    }
    if (premise && k >= 2) {
        const auto anchor_k1 = mixture(seq, i, k - 1);
        for (int j = 1; j <= k - 1 && premise; ++j) {
            premise = tv_distance(anchor_k1, mixture(seq, i + j, k - 1)) <= kEqTol;
        }
    }
    if (!premise) return true;  // implication vacuously holds

    for (int t = 1; t < 2 * k - 1; ++t) {
        if (tv_distance(seq.dists[i], seq.dists[i + t]) > kEqTol) return false;
    }
    return true;
}

namespace {

// all categorical distributions over m groups with entries j/grid_steps
void enumerate_grid_dists(int m, int grid_steps, std::vector<CategoricalDistribution>& out) {
    std::vector<int> parts(m, 0);
    // enumerate compositions of grid_steps into m non-negative parts
    const auto emit = [&]() {
        CategoricalDistribution d;
        d.mass.reserve(m);
        for (int p : parts) d.mass.push_back(static_cast<double>(p) / grid_steps);
        out.push_back(std::move(d));
    };
    // odometer over first m-1 parts; last absorbs the remainder
    std::vector<int> idx(m - 1, 0);
    for (;;) {
        int used = 0;
        bool valid = true;
        for (int j = 0; j < m - 1; ++j) {
            parts[j] = idx[j];
            used += idx[j];
            if (used > grid_steps) { valid = false; break; }
        }
        if (valid) {
            parts[m - 1] = grid_steps - used;
            emit();
        }
        int pos = m - 2;
        while (pos >= 0) {
            if (++idx[pos] <= grid_steps) break;
            idx[pos] = 0;
            --pos;
        }
        if (pos < 0) break;  // m == 1 emits the point mass once and stops here
    }
}

}  // namespace

SweepResult lemma2_grid_sweep(int max_groups, int max_window, int grid_steps) {
    SweepResult result;
    for (int m = 1; m <= max_groups; ++m) {
        std::vector<CategoricalDistribution> palette;
        enumerate_grid_dists(m, grid_steps, palette);
        const int p = static_cast<int>(palette.size());
        for (int k = 1; k <= max_window; ++k) {
            const int len = 2 * k;
            DistributionSequence seq;
            seq.dists.assign(len, palette[0]);
            std::vector<int> idx(len, 0);
            for (;;) {
                for (int t = 0; t < len; ++t) seq.dists[t] = palette[idx[t]];
                ++result.sequences_checked;
                if (!lemma2_bruteforce_check(seq, 0, k)) ++result.counterexamples;
                int pos = len - 1;
                while (pos >= 0) {
                    if (++idx[pos] < p) break;
                    idx[pos] = 0;
                    --pos;
                }
                if (pos < 0) break;
            }
        }
    }
    return result;
}

ConcentrationResult concentration_coverage(int groups, double epsilon, double delta,
                                           int replications, std::uint64_t seed) {
    if (replications < 1) throw std::invalid_argument("concentration_coverage: no replications");
    ConcentrationResult res;
    res.k = required_probes(groups, epsilon, delta);
    res.replications = replications;
    const int k = static_cast<int>(res.k);
    const double limit = epsilon / 3.0;

    for (int rep = 0; rep < replications; ++rep) {
        Rng rng(derive_seed(seed, 0xC0FFEE, static_cast<std::uint64_t>(rep)));
        // random stationary distribution (Dirichlet(1,..,1))
        std::vector<double> stat(groups);
        double total = 0.0;
        for (auto& v : stat) {
            v = rng.exponential(1.0);
            total += v;
        }
        for (auto& v : stat) v /= total;

        std::vector<int> samples(2 * k);
        for (auto& s : samples) s = static_cast<int>(rng.categorical(stat));

        bool covered = true;
        std::vector<double> emp(groups);
        for (int l = 1; l <= k && covered; ++l) {
            for (int t = k - 1; t <= k && covered; ++t) {
                if (t < 1) continue;
                window_counts(samples, l, t, emp);
                double l1 = 0.0;
                for (int g = 0; g < groups; ++g) l1 += std::abs(emp[g] - stat[g]);
                covered = 0.5 * l1 <= limit;
            }
        }
        if (covered) ++res.covered;
    }
    return res;
}

}  // namespace cdx::theory
