#pragma once

/**
 * Probe bookkeeping for chain-of-thought programs.
 *
 * A trace is the sequence of intermediate answers extracted at fixed token
 * intervals while a model reasons. We score the stability of those answers
 * with a sliding-window consistency check, filter out hesitant probes, and
 * decide when the chain can stop: either because the answer settled or
 * because the token budget ran out.
 *
 * Traces round-trip through JSON-lines, one record per line:
 *   {"program_id": "...", "step_index": 1, "token_offset": 64,
 *    "answer": "...", "hesitant": false}
 */

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdx::probe {

struct ProbeConfig {
    int interval_tokens = 64;  // probe every this many generated tokens
    int window = 3;            // w, records per consistency window
    double threshold = 0.9;    // tau in (0,1]
    std::vector<std::string> hesitation_markers = {"wait", "hmm"};
    long max_tokens = 1 << 20;  // token budget

    void validate() const;
};

struct AnswerRecord {
    int step_index = 0;     // probe ordinal, starts at 1
    long token_offset = 0;  // cumulative tokens at this probe, strictly increasing
    std::string answer;
    bool hesitant = false;
};

enum class TerminationReason { Certain, Budget, CriteriaExternal };

const char* termination_reason_name(TerminationReason r);

struct ProbeTrace {
    std::vector<AnswerRecord> records;
    std::optional<int> terminated_at;  // step_index of the terminating record
    TerminationReason termination_reason = TerminationReason::Budget;
};

enum class ExitDecision { Continue, ExitCertain, ExitBudget };

/// True iff any marker occurs as a case-insensitive substring of the answer.
bool flag_hesitation(std::string_view answer, std::span<const std::string> markers);

/// Consistency C at step k over a window of w usable records: hesitant
/// records are dropped first, then the last w remaining records up to step k
/// are compared against the window's final answer (trimmed exact match).
/// Returns nullopt while fewer than w usable records exist ("window not ready").
std::optional<double> consistency(std::span<const AnswerRecord> records, int k, int w);

/// Decision at the latest step of the trace. Certainty wins over budget when
/// both trigger at the same step.
ExitDecision should_exit(const ProbeTrace& trace, const ProbeConfig& cfg);

struct FinalAnswer {
    std::string answer;
    bool low_confidence = false;  // every probe was hesitant
};

/// The answer reported at exit: the terminating record's answer when the exit
/// was certainty-driven, otherwise the most recent non-hesitant answer
/// (falling back to the most recent answer of any kind).
FinalAnswer final_answer(const ProbeTrace& trace);

/// Theory-grounded alternative stop rule: maps the trace's non-hesitant
/// answers to groups and runs the epsilon-accuracy mixture test with window k.
/// nullopt until enough probes exist.
std::optional<bool> stationary_by_epsilon_test(std::span<const AnswerRecord> records, int k,
                                               double epsilon);

// ============================================================================
// JSONL trace files
// ============================================================================

struct TraceLine {
    std::string program_id;
    AnswerRecord record;
};

/// Parses one JSONL stream. Throws std::runtime_error mentioning the 1-based
/// line number on malformed lines; blank lines are skipped.
std::vector<TraceLine> read_trace_jsonl(std::istream& in);
std::vector<TraceLine> read_trace_file(const std::string& path);

void write_trace_jsonl(std::ostream& out, std::span<const TraceLine> lines);

}  // namespace cdx::probe
