#include "cdx/probe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cdx/metrics.hpp"
#include "cdx/theory.hpp"

namespace cdx::probe {

using nlohmann::json;

void ProbeConfig::validate() const {
    if (interval_tokens < 1) throw std::invalid_argument("probe: interval_tokens must be >= 1");
    if (window < 1) throw std::invalid_argument("probe: window must be >= 1");
    if (threshold <= 0.0 || threshold > 1.0)
        throw std::invalid_argument("probe: threshold must be in (0,1]");
    if (max_tokens < 1) throw std::invalid_argument("probe: max_tokens must be >= 1");
}

const char* termination_reason_name(TerminationReason r) {
    switch (r) {
        case TerminationReason::Certain: return "certain";
        case TerminationReason::Budget: return "budget";
        case TerminationReason::CriteriaExternal: return "criteria_external";
    }
    return "?";
}

bool flag_hesitation(std::string_view answer, std::span<const std::string> markers) {
    std::string lower(answer);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& m : markers) {
        if (!m.empty() && lower.find(m) != std::string::npos) return true;
    }
    return false;
}

namespace {

bool same_answer(std::string_view a, std::string_view b) {
    return metrics::trim(a) == metrics::trim(b);
}

// non-hesitant records with step_index <= k, in order
std::vector<const AnswerRecord*> usable_up_to(std::span<const AnswerRecord> records, int k) {
    std::vector<const AnswerRecord*> out;
    for (const auto& r : records) {
        if (r.step_index > k) break;
        if (!r.hesitant) out.push_back(&r);
    }
    return out;
}

}  // namespace

std::optional<double> consistency(std::span<const AnswerRecord> records, int k, int w) {
    if (w < 1) throw std::invalid_argument("consistency: window must be >= 1");
    const auto usable = usable_up_to(records, k);
    if (static_cast<int>(usable.size()) < w) return std::nullopt;
    const auto window_begin = usable.end() - w;
    const std::string_view last = (*(usable.end() - 1))->answer;
    int agree = 0;
    for (auto it = window_begin; it != usable.end(); ++it) {
        if (same_answer((*it)->answer, last)) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(w);
}

ExitDecision should_exit(const ProbeTrace& trace, const ProbeConfig& cfg) {
    cfg.validate();
    if (trace.records.empty()) return ExitDecision::Continue;
    const int latest = trace.records.back().step_index;
    const auto c = consistency(trace.records, latest, cfg.window);
    if (c && *c >= cfg.threshold) return ExitDecision::ExitCertain;
    if (trace.records.back().token_offset >= cfg.max_tokens) return ExitDecision::ExitBudget;
    return ExitDecision::Continue;
}

FinalAnswer final_answer(const ProbeTrace& trace) {
    if (trace.records.empty()) throw std::invalid_argument("final_answer: empty trace");

    if (trace.terminated_at && trace.termination_reason == TerminationReason::Certain) {
        for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it) {
            if (it->step_index == *trace.terminated_at)
                return {std::string(metrics::trim(it->answer)), false};
        }
    }
    // budget or external termination: latest non-hesitant answer
    for (auto it = trace.records.rbegin(); it != trace.records.rend(); ++it) {
        if (!it->hesitant) return {std::string(metrics::trim(it->answer)), false};
    }
    // every probe hesitated; report the last one but mark it
    return {std::string(metrics::trim(trace.records.back().answer)), true};
}

std::optional<bool> stationary_by_epsilon_test(std::span<const AnswerRecord> records, int k,
                                               double epsilon) {
    std::vector<int> groups;
    std::vector<std::string> seen;
    for (const auto& r : records) {
        if (r.hesitant) continue;
        const std::string key(metrics::trim(r.answer));
        auto it = std::find(seen.begin(), seen.end(), key);
        if (it == seen.end()) {
            seen.push_back(key);
            groups.push_back(static_cast<int>(seen.size()) - 1);
        } else {
            groups.push_back(static_cast<int>(it - seen.begin()));
        }
    }
    return theory::epsilon_stop_test(groups, k, epsilon);
}

// ============================================================================
// JSONL
// ============================================================================

std::vector<TraceLine> read_trace_jsonl(std::istream& in) {
    std::vector<TraceLine> out;
    std::string line;
    long line_no = 0;
    std::map<std::string, std::pair<long, int>> last_seen;  // program -> (offset, step)
    while (std::getline(in, line)) {
        ++line_no;
        if (metrics::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        try {
            TraceLine t;
            t.program_id = j.at("program_id").get<std::string>();
            t.record.step_index = j.at("step_index").get<int>();
            t.record.token_offset = j.at("token_offset").get<long>();
            t.record.answer = j.at("answer").get<std::string>();
            t.record.hesitant = j.value("hesitant", false);
            auto it = last_seen.find(t.program_id);
            if (it != last_seen.end()) {
                if (t.record.token_offset <= it->second.first)
                    throw std::runtime_error("token_offset does not increase");
                if (t.record.step_index <= it->second.second)
                    throw std::runtime_error("step_index does not increase");
            }
            last_seen[t.program_id] = {t.record.token_offset, t.record.step_index};
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(line_no) +
                                     ": missing or mistyped field: " + e.what());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("trace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<TraceLine> read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    return read_trace_jsonl(in);
}

void write_trace_jsonl(std::ostream& out, std::span<const TraceLine> lines) {
    for (const auto& t : lines) {
        json j{{"program_id", t.program_id},
               {"step_index", t.record.step_index},
               {"token_offset", t.record.token_offset},
               {"answer", t.record.answer},
               {"hesitant", t.record.hesitant}};
        out << j.dump() << '\n';
    }
}

}  // namespace cdx::probe
