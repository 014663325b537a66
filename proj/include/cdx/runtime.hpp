#pragma once

/**
 * Reasoning-program abstraction and the synthetic oracle that drives it.
 *
 * A program is a token-emitting state machine for one of four archetypes:
 *   SC     - parallel branches, majority vote
 *   Rebase - layered candidates with scores, softmax-weighted vote
 *   MCTS   - sequential rollout chains with rewards, best-of-n
 *   CoT    - one chain probed at fixed token intervals
 *
 * Instead of a live model, programs are driven either by a synthetic answer
 * process with a known convergence point (so ground-truth token savings are
 * exact) or by a recorded probe trace. All randomness is drawn from streams
 * derived per program id, so program histories are independent of scheduling
 * order and bit-identical across runs with the same seed.
 */

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdx/metrics.hpp"
#include "cdx/probe.hpp"
#include "cdx/rng.hpp"

namespace cdx::runtime {

enum class Archetype { SC, Rebase, MCTS, CoT };

const char* archetype_name(Archetype a);
Archetype archetype_from_name(const std::string& name);

// ============================================================================
// Synthetic oracle parameters
// ============================================================================

/// Per-step answer sampler. Before the convergence knob, the stationary
/// answer is mixed with (groups-1) distractors at noise_level; from the
/// convergence knob on, a distractor only appears with residual_noise.
/// Unsolvable programs draw uniformly over distractors at every step.
struct AnswerProcess {
    std::string stationary_answer = "S";
    int groups = 4;  // M >= 2
    double noise_level = 0.5;
    double residual_noise = 0.0;
    double hesitation_prob = 0.0;  // CoT: probability a probe reads as hesitant
};

/// Request token counts. A program-level mean is drawn once (lognormal), and
/// each request draws around it; request_sigma = 0 pins every request of the
/// program to the same count.
struct TokenModel {
    double mean_mu = 5.3;  // ~200 tokens
    double mean_sigma = 0.5;
    double request_sigma = 0.0;
};

/// Rewards / scores drawn from a Beta whose mean rises linearly with
/// proximity to the convergence knob.
struct RewardModel {
    double start_mean = 0.3;
    double final_mean = 0.9;
    double concentration = 40.0;
    double unsolvable_mean = 0.25;
};

struct SyntheticProgramSpec {
    Archetype archetype = Archetype::SC;
    int true_convergence_knob = 1;  // knob at which the answer process is stationary
    bool solvable = true;
    int difficulty_factor = 1;  // 1 easy, 2 variable, 3 unsolvable
    int resource_cap = 20;      // max knob
    AnswerProcess answers;
    TokenModel tokens;
    std::optional<RewardModel> rewards;
    int mcts_chain_len = 1;       // requests per rollout chain
    int rebase_max_depth = 8;     // layer limit
    int cot_interval_tokens = 64;

    void validate() const;
};

// ============================================================================
// Program state
// ============================================================================

enum class ProgramStatus { Pending, Running, Terminated };

/// One unit of work for the simulated backend. Chained requests (MCTS
/// rollouts, CoT steps) are issued link by link; chain_final marks the last.
struct Request {
    std::uint64_t program_id = 0;
    int branch_id = 0;  // unique per program, issue order
    double issued_at = 0.0;
    long tokens = 0;
    std::optional<double> completed_at;
    int chain_id = -1;  // -1 for standalone requests
    int chain_pos = 0;
    bool chain_final = true;
};

struct PathSample {
    int knob_point = 0;  // 1-based knob index the sample belongs to
    std::string answer;
    std::optional<double> reward;  // MCTS reward or Rebase score
};

struct CertaindexPoint {
    int knob_point = 0;
    metrics::SignalVector signals;
};

struct ProgramState {
    std::vector<PathSample> paths;   // SC branches / MCTS rollouts / Rebase nodes
    std::vector<int> layer_widths;   // Rebase: width of each emitted layer
    probe::ProbeTrace trace;         // CoT
};

struct ReasoningProgram {
    std::uint64_t id = 0;
    std::string label;  // external id, used in reports
    Archetype archetype = Archetype::SC;
    int knob = 0;  // units granted and expanded
    int resource_cap = 0;
    std::vector<CertaindexPoint> certaindex_history;
    ProgramState state;
    long tokens_used = 0;  // sum of completed request tokens
    ProgramStatus status = ProgramStatus::Pending;
};

struct AggregateResult {
    std::string answer;
    bool correct = false;       // answer matches the oracle's stationary answer and solvable
    bool low_confidence = false;
};

// ============================================================================
// Driver
// ============================================================================

/// Owns one program plus the oracle feeding it. expand() pre-samples all
/// randomness for the granted units, so completion order never shifts the
/// streams.
class ProgramDriver {
public:
    /// Synthetic program. Streams derive from (run_seed, id).
    ProgramDriver(std::uint64_t id, std::string label, const SyntheticProgramSpec& spec,
                  std::uint64_t run_seed);
    /// Replay program: a CoT driver that consumes recorded probe answers.
    ProgramDriver(std::uint64_t id, std::string label,
                  std::vector<probe::AnswerRecord> recorded, const probe::ProbeConfig& cfg);

    ReasoningProgram& program() { return prog_; }
    const ReasoningProgram& program() const { return prog_; }
    const SyntheticProgramSpec* spec() const { return has_spec_ ? &spec_ : nullptr; }
    const probe::ProbeConfig& cot_config() const { return cot_cfg_; }

    /// Emits requests for step_budget knob units. Chained archetypes emit
    /// only the first link; later links come from on_request_complete.
    /// Throws when the program is terminated or the grant exceeds the cap.
    std::vector<Request> expand(int step_budget, double now = 0.0);

    /// Credits tokens, advances chain bookkeeping; returns the next link of
    /// the chain when one exists.
    std::optional<Request> on_request_complete(const Request& r, double now);

    /// True while any emitted request or chain link is unfinished.
    bool chunk_outstanding() const { return outstanding_ > 0 || !pending_chains_.empty(); }

    /// Computes archetype-appropriate signals and appends them to the history.
    metrics::SignalVector update_certaindex();

    /// Final answer + correctness. Throws on a program with no completed work.
    AggregateResult aggregate() const;

    /// The vote the program would report if it stopped after `units` knob
    /// units; used by the profiler to label would-have-stopped outcomes.
    AggregateResult aggregate_prefix(int units) const;

    /// False once the program is terminated, at its cap, past the Rebase
    /// depth limit, or out of recorded replay data.
    bool can_expand() const;

    void terminate(probe::TerminationReason reason);

    int completed_units() const { return completed_units_; }
    /// Completed per-iteration token counts (chain totals for chained archetypes).
    const std::vector<long>& iteration_tokens() const { return iteration_tokens_; }

private:
    struct PendingChain {
        std::deque<long> link_tokens;  // pre-sampled for the remaining links
        int next_pos = 0;
        int chain_id = 0;
        long done_tokens = 0;
    };

    long sample_request_tokens();
    std::string sample_answer(int knob_point);
    double sample_reward(int knob_point);
    probe::AnswerRecord next_cot_record(int knob_point);
    Request make_request(long tokens, double now, int chain_id, int chain_pos, bool final);

    ReasoningProgram prog_;
    SyntheticProgramSpec spec_;
    bool has_spec_ = false;
    probe::ProbeConfig cot_cfg_;

    // replay source
    std::vector<probe::AnswerRecord> recorded_;
    std::size_t recorded_next_ = 0;

    Rng answer_rng_;
    Rng token_rng_;
    Rng reward_rng_;
    double program_token_mean_ = 0.0;

    int next_branch_ = 0;
    int next_chain_ = 0;
    int outstanding_ = 0;        // unfinished emitted requests
    int completed_units_ = 0;    // knob units fully completed
    std::vector<long> iteration_tokens_;
    std::unordered_map<int, PendingChain> pending_chains_;
    long last_cot_offset_ = 0;
};

// ============================================================================
// Workload generation
// ============================================================================

struct WorkloadParams {
    int count = 100;
    Archetype archetype = Archetype::SC;
    int answer_groups = 5;
    double noise_level = 0.5;
    double residual_noise = 0.0;
    double hesitation_prob = 0.0;
    int convergence_min = 1;
    int convergence_max = 10;
    bool convergence_half_cap = false;  // clamp convergence to cap/2
    double solvable_fraction = 0.9;
    std::vector<int> caps = {20};  // cycled across programs
    int easy_convergence_max = 3;  // difficulty 1 when convergence <= this
    TokenModel tokens;
    bool with_rewards = false;
    RewardModel reward_model;
    int mcts_chain_len = 1;
    int rebase_max_depth = 8;
    int cot_interval_tokens = 64;

    void validate() const;
};

/// Deterministic expansion of parameters into per-program specs.
std::vector<SyntheticProgramSpec> generate_workload(const WorkloadParams& params,
                                                    std::uint64_t seed);

// ============================================================================
// Trace replay
// ============================================================================

/// Groups a parsed JSONL trace by program and wraps each group in a CoT
/// driver fed by the recorded answers. Program order follows first appearance.
std::vector<ProgramDriver> replay_trace(const std::string& path, const probe::ProbeConfig& cfg);
std::vector<ProgramDriver> replay_trace_lines(std::vector<probe::TraceLine> lines,
                                              const probe::ProbeConfig& cfg);

}  // namespace cdx::runtime
