#include "cdx/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace cdx::runtime {

const char* archetype_name(Archetype a) {
    switch (a) {
        case Archetype::SC: return "sc";
        case Archetype::Rebase: return "rebase";
        case Archetype::MCTS: return "mcts";
        case Archetype::CoT: return "cot";
    }
    return "?";
}

Archetype archetype_from_name(const std::string& name) {
    if (name == "sc") return Archetype::SC;
    if (name == "rebase") return Archetype::Rebase;
    if (name == "mcts") return Archetype::MCTS;
    if (name == "cot") return Archetype::CoT;
    throw std::invalid_argument("unknown archetype: " + name);
}

void SyntheticProgramSpec::validate() const {
    if (answers.groups < 2) throw std::invalid_argument("spec: answer groups must be >= 2");
    if (answers.noise_level < 0.0 || answers.noise_level > 1.0)
        throw std::invalid_argument("spec: noise_level outside [0,1]");
    if (answers.residual_noise < 0.0 || answers.residual_noise > 1.0)
        throw std::invalid_argument("spec: residual_noise outside [0,1]");
    if (answers.hesitation_prob < 0.0 || answers.hesitation_prob > 1.0)
        throw std::invalid_argument("spec: hesitation_prob outside [0,1]");
    if (true_convergence_knob < 1) throw std::invalid_argument("spec: convergence knob must be >= 1");
    if (difficulty_factor < 1 || difficulty_factor > 3)
        throw std::invalid_argument("spec: difficulty factor must be 1..3");
    if (resource_cap < 1) throw std::invalid_argument("spec: resource cap must be >= 1");
    if (mcts_chain_len < 1) throw std::invalid_argument("spec: mcts_chain_len must be >= 1");
    if (rebase_max_depth < 1) throw std::invalid_argument("spec: rebase_max_depth must be >= 1");
    if (cot_interval_tokens < 1) throw std::invalid_argument("spec: cot interval must be >= 1");
    if (tokens.mean_sigma < 0.0 || tokens.request_sigma < 0.0)
        throw std::invalid_argument("spec: token sigmas must be >= 0");
}

// ============================================================================
// Driver
// ============================================================================

ProgramDriver::ProgramDriver(std::uint64_t id, std::string label,
                             const SyntheticProgramSpec& spec, std::uint64_t run_seed)
    : spec_(spec),
      has_spec_(true),
      answer_rng_(derive_seed(run_seed, id, 1)),
      token_rng_(derive_seed(run_seed, id, 2)),
      reward_rng_(derive_seed(run_seed, id, 3)) {
    spec_.validate();
    prog_.id = id;
    prog_.label = std::move(label);
    prog_.archetype = spec_.archetype;
    prog_.resource_cap = spec_.resource_cap;
    cot_cfg_.interval_tokens = spec_.cot_interval_tokens;
    program_token_mean_ = std::max<double>(
        1.0, std::llround(token_rng_.lognormal(spec_.tokens.mean_mu, spec_.tokens.mean_sigma)));
}

ProgramDriver::ProgramDriver(std::uint64_t id, std::string label,
                             std::vector<probe::AnswerRecord> recorded,
                             const probe::ProbeConfig& cfg)
    : cot_cfg_(cfg),
      recorded_(std::move(recorded)),
      answer_rng_(0),
      token_rng_(0),
      reward_rng_(0) {
    if (recorded_.empty()) throw std::invalid_argument("replay: program has no records");
    prog_.id = id;
    prog_.label = std::move(label);
    prog_.archetype = Archetype::CoT;
    prog_.resource_cap = static_cast<int>(recorded_.size());
}

long ProgramDriver::sample_request_tokens() {
    if (spec_.tokens.request_sigma <= 0.0) return static_cast<long>(program_token_mean_);
    const double v =
        token_rng_.lognormal(std::log(program_token_mean_), spec_.tokens.request_sigma);
    return std::max<long>(1, std::llround(v));
}

std::string ProgramDriver::sample_answer(int knob_point) {
    const auto& ap = spec_.answers;
    const auto distractor = [&]() {
        const auto idx = answer_rng_.uniform_int(1, ap.groups - 1);
        return "D" + std::to_string(idx);
    };
    if (!spec_.solvable) return distractor();
    const double noise =
        knob_point < spec_.true_convergence_knob ? ap.noise_level : ap.residual_noise;
    if (noise > 0.0 && answer_rng_.uniform() < noise) return distractor();
    return ap.stationary_answer;
}

double ProgramDriver::sample_reward(int knob_point) {
    const RewardModel rm = spec_.rewards.value_or(RewardModel{});
    double mean;
    if (!spec_.solvable) {
        mean = rm.unsolvable_mean;
    } else {
        const double progress =
            std::min(1.0, static_cast<double>(knob_point) /
                              static_cast<double>(spec_.true_convergence_knob));
        mean = rm.start_mean + (rm.final_mean - rm.start_mean) * progress;
    }
    mean = std::clamp(mean, 1e-6, 1.0 - 1e-6);
    return reward_rng_.beta(mean * rm.concentration, (1.0 - mean) * rm.concentration);
}

probe::AnswerRecord ProgramDriver::next_cot_record(int knob_point) {
    if (!recorded_.empty()) {
        if (recorded_next_ >= recorded_.size())
            throw std::runtime_error("replay: trace exhausted");
        return recorded_[recorded_next_++];
    }
    probe::AnswerRecord rec;
    rec.step_index = knob_point;
    rec.token_offset = last_cot_offset_ + spec_.cot_interval_tokens;
    const bool hesitant =
        spec_.answers.hesitation_prob > 0.0 && answer_rng_.uniform() < spec_.answers.hesitation_prob;
    const std::string ans = sample_answer(knob_point);
    rec.answer = hesitant ? "wait, " + ans : ans;
    rec.hesitant = hesitant;
    return rec;
}

Request ProgramDriver::make_request(long tokens, double now, int chain_id, int chain_pos,
                                    bool final) {
    Request r;
    r.program_id = prog_.id;
    r.branch_id = next_branch_++;
    r.issued_at = now;
    r.tokens = tokens;
    r.chain_id = chain_id;
    r.chain_pos = chain_pos;
    r.chain_final = final;
    ++outstanding_;
    return r;
}

std::vector<Request> ProgramDriver::expand(int step_budget, double now) {
    if (prog_.status == ProgramStatus::Terminated)
        throw std::runtime_error("expand: program already terminated");
    if (step_budget < 1) throw std::invalid_argument("expand: step budget must be >= 1");
    if (prog_.knob + step_budget > prog_.resource_cap)
        throw std::runtime_error("expand: grant exceeds resource cap");
    prog_.status = ProgramStatus::Running;

    std::vector<Request> out;
    switch (prog_.archetype) {
        case Archetype::SC: {
            for (int u = 1; u <= step_budget; ++u) {
                const int k = prog_.knob + u;
                prog_.state.paths.push_back({k, sample_answer(k), std::nullopt});
                out.push_back(make_request(sample_request_tokens(), now, -1, 0, true));
            }
            break;
        }
        case Archetype::Rebase: {
            if (static_cast<int>(prog_.state.layer_widths.size()) >= spec_.rebase_max_depth)
                throw std::runtime_error("expand: rebase depth limit reached");
            for (int u = 1; u <= step_budget; ++u) {
                const int k = prog_.knob + u;
                prog_.state.paths.push_back({k, sample_answer(k), sample_reward(k)});
                out.push_back(make_request(sample_request_tokens(), now, -1, 0, true));
            }
            prog_.state.layer_widths.push_back(step_budget);
            break;
        }
        case Archetype::MCTS: {
            for (int u = 1; u <= step_budget; ++u) {
                const int k = prog_.knob + u;
                prog_.state.paths.push_back({k, sample_answer(k), sample_reward(k)});
                const int links = spec_.mcts_chain_len;
                const int chain = next_chain_++;
                PendingChain pc;
                pc.chain_id = chain;
                for (int l = 0; l < links; ++l) pc.link_tokens.push_back(sample_request_tokens());
                const long first = pc.link_tokens.front();
                pc.link_tokens.pop_front();
                pc.next_pos = 1;
                out.push_back(make_request(first, now, chain, 0, pc.link_tokens.empty()));
                if (!pc.link_tokens.empty()) pending_chains_.emplace(chain, std::move(pc));
            }
            break;
        }
        case Archetype::CoT: {
            // the whole grant is one sequential chain, one probe step per link
            const int chain = next_chain_++;
            PendingChain pc;
            pc.chain_id = chain;
            for (int u = 1; u <= step_budget; ++u) {
                const int k = prog_.knob + u;
                const auto rec = next_cot_record(k);
                const long link_tokens = rec.token_offset - last_cot_offset_;
                if (link_tokens <= 0) throw std::runtime_error("trace: token_offset regression");
                last_cot_offset_ = rec.token_offset;
                prog_.state.trace.records.push_back(rec);
                pc.link_tokens.push_back(link_tokens);
            }
            const long first = pc.link_tokens.front();
            pc.link_tokens.pop_front();
            pc.next_pos = 1;
            out.push_back(make_request(first, now, chain, 0, pc.link_tokens.empty()));
            if (!pc.link_tokens.empty()) pending_chains_.emplace(chain, std::move(pc));
            break;
        }
    }
    prog_.knob += step_budget;
    return out;
}

std::optional<Request> ProgramDriver::on_request_complete(const Request& r, double now) {
    prog_.tokens_used += r.tokens;
    --outstanding_;

    switch (prog_.archetype) {
        case Archetype::SC:
        case Archetype::Rebase:
            ++completed_units_;
            iteration_tokens_.push_back(r.tokens);
            break;
        case Archetype::MCTS: {
            auto it = pending_chains_.find(r.chain_id);
            if (r.chain_final) {
                long total = r.tokens;
                if (it != pending_chains_.end()) total += it->second.done_tokens;
                ++completed_units_;
                iteration_tokens_.push_back(total);
            } else if (it != pending_chains_.end()) {
                it->second.done_tokens += r.tokens;
            }
            break;
        }
        case Archetype::CoT:
            ++completed_units_;
            iteration_tokens_.push_back(r.tokens);
            break;
    }

    auto it = pending_chains_.find(r.chain_id);
    if (it == pending_chains_.end() || it->second.link_tokens.empty()) {
        if (it != pending_chains_.end()) pending_chains_.erase(it);
        return std::nullopt;
    }
    auto& pc = it->second;
    const long tokens = pc.link_tokens.front();
    pc.link_tokens.pop_front();
    const bool final = pc.link_tokens.empty();
    Request next = make_request(tokens, now, pc.chain_id, pc.next_pos++, final);
    if (final) pending_chains_.erase(it);
    return next;
}

metrics::SignalVector ProgramDriver::update_certaindex() {
    metrics::SignalVector sv;
    const auto cluster_certainty = [&]() {
        std::vector<std::string> answers;
        answers.reserve(prog_.state.paths.size());
        for (const auto& p : prog_.state.paths) answers.push_back(p.answer);
        return metrics::certaindex_entropy(metrics::cluster_exact(answers));
    };
    switch (prog_.archetype) {
        case Archetype::SC: {
            if (prog_.state.paths.empty())
                throw std::invalid_argument("update_certaindex: no completed expansion");
            sv.certaindex_entropy = cluster_certainty();
            break;
        }
        case Archetype::MCTS:
        case Archetype::Rebase: {
            if (prog_.state.paths.empty())
                throw std::invalid_argument("update_certaindex: no completed expansion");
            sv.certaindex_entropy = cluster_certainty();
            metrics::RewardSet rs;
            rs.aggregation = prog_.archetype == Archetype::MCTS ? metrics::RewardAggregation::Mean
                                                                : metrics::RewardAggregation::Max;
            for (const auto& p : prog_.state.paths) {
                if (p.reward) rs.rewards.push_back(*p.reward);
            }
            if (!rs.rewards.empty()) sv.certaindex_reward = metrics::certaindex_reward(rs);
            break;
        }
        case Archetype::CoT: {
            const auto& recs = prog_.state.trace.records;
            if (recs.empty())
                throw std::invalid_argument("update_certaindex: no completed expansion");
            const auto c = probe::consistency(recs, recs.back().step_index, cot_cfg_.window);
            sv.certaindex_entropy = c.value_or(0.0);  // not-ready windows read as zero certainty
            break;
        }
    }
    if (!iteration_tokens_.empty()) {
        sv.mean_output_length =
            static_cast<double>(std::accumulate(iteration_tokens_.begin(), iteration_tokens_.end(),
                                                long{0})) /
            static_cast<double>(iteration_tokens_.size());
    }
    if (!prog_.certaindex_history.empty() &&
        prog_.certaindex_history.back().knob_point >= prog_.knob)
        throw std::logic_error("update_certaindex: knob did not advance");
    prog_.certaindex_history.push_back({prog_.knob, sv});
    return sv;
}

namespace {

// plurality with first-seen tie-break, optionally weighted
std::string weighted_plurality(std::span<const PathSample> paths, bool softmax_weights) {
    std::vector<std::string> order;
    std::map<std::string, double> weight;
    for (const auto& p : paths) {
        const std::string key(metrics::trim(p.answer));
        if (!weight.count(key)) order.push_back(key);
        const double w = softmax_weights ? std::exp(p.reward.value_or(0.0)) : 1.0;
        weight[key] += w;
    }
    std::string best;
    double best_w = -1.0;
    for (const auto& key : order) {
        if (weight[key] > best_w) {
            best = key;
            best_w = weight[key];
        }
    }
    return best;
}

}  // namespace

AggregateResult ProgramDriver::aggregate() const {
    if (prog_.status != ProgramStatus::Terminated)
        throw std::runtime_error("aggregate: program still running");
    return aggregate_prefix(prog_.knob);
}

AggregateResult ProgramDriver::aggregate_prefix(int units) const {
    AggregateResult res;
    switch (prog_.archetype) {
        case Archetype::SC: {
            const auto n = std::min<std::size_t>(units, prog_.state.paths.size());
            if (n == 0) throw std::runtime_error("aggregate: empty program");
            res.answer = weighted_plurality({prog_.state.paths.data(), n}, false);
            break;
        }
        case Archetype::Rebase: {
            const auto n = std::min<std::size_t>(units, prog_.state.paths.size());
            if (n == 0) throw std::runtime_error("aggregate: empty program");
            // candidates are the leaves: the last layer fully inside the prefix
            std::size_t layer_start = 0, layer_end = 0;
            for (int w : prog_.state.layer_widths) {
                if (layer_end + static_cast<std::size_t>(w) > n) break;
                layer_start = layer_end;
                layer_end += static_cast<std::size_t>(w);
            }
            if (layer_end == 0) { layer_start = 0; layer_end = n; }
            res.answer = weighted_plurality(
                {prog_.state.paths.data() + layer_start, layer_end - layer_start}, true);
            break;
        }
        case Archetype::MCTS: {
            const auto n = std::min<std::size_t>(units, prog_.state.paths.size());
            if (n == 0) throw std::runtime_error("aggregate: empty program");
            std::size_t best = 0;
            for (std::size_t i = 1; i < n; ++i) {
                if (prog_.state.paths[i].reward.value_or(0.0) >
                    prog_.state.paths[best].reward.value_or(0.0))
                    best = i;
            }
            res.answer = std::string(metrics::trim(prog_.state.paths[best].answer));
            break;
        }
        case Archetype::CoT: {
            const auto& recs = prog_.state.trace.records;
            if (recs.empty()) throw std::runtime_error("aggregate: empty program");
            probe::ProbeTrace prefix;
            const auto n = std::min<std::size_t>(units, recs.size());
            prefix.records.assign(recs.begin(), recs.begin() + n);
            prefix.terminated_at = prog_.state.trace.terminated_at;
            prefix.termination_reason = prog_.state.trace.termination_reason;
            if (prefix.terminated_at && *prefix.terminated_at > prefix.records.back().step_index)
                prefix.terminated_at.reset();
            const auto fa = probe::final_answer(prefix);
            res.answer = fa.answer;
            res.low_confidence = fa.low_confidence;
            break;
        }
    }
    if (has_spec_) {
        res.correct = spec_.solvable &&
                      metrics::trim(res.answer) == metrics::trim(spec_.answers.stationary_answer);
    }
    return res;
}

void ProgramDriver::terminate(probe::TerminationReason reason) {
    prog_.status = ProgramStatus::Terminated;
    if (prog_.archetype == Archetype::CoT && !prog_.state.trace.records.empty()) {
        prog_.state.trace.terminated_at = prog_.state.trace.records.back().step_index;
        prog_.state.trace.termination_reason = reason;
    }
}

// ============================================================================
// Workload generation
// ============================================================================

void WorkloadParams::validate() const {
    if (count < 0) throw std::invalid_argument("workload: count must be >= 0");
    if (answer_groups < 2) throw std::invalid_argument("workload: answer_groups must be >= 2");
    if (caps.empty()) throw std::invalid_argument("workload: caps must be non-empty");
    for (int c : caps) {
        if (c < 1) throw std::invalid_argument("workload: caps must be >= 1");
    }
    if (solvable_fraction < 0.0 || solvable_fraction > 1.0)
        throw std::invalid_argument("workload: solvable_fraction outside [0,1]");
    if (convergence_min < 1 || convergence_max < convergence_min)
        throw std::invalid_argument("workload: bad convergence range");
}

std::vector<SyntheticProgramSpec> generate_workload(const WorkloadParams& params,
                                                    std::uint64_t seed) {
    params.validate();
    std::vector<SyntheticProgramSpec> out;
    out.reserve(params.count);
    for (int i = 0; i < params.count; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 0x757));
        SyntheticProgramSpec spec;
        spec.archetype = params.archetype;
        spec.resource_cap = params.caps[i % params.caps.size()];
        spec.solvable = rng.uniform() < params.solvable_fraction;
        int hi = params.convergence_max;
        if (params.convergence_half_cap) hi = std::max(1, spec.resource_cap / 2);
        const int lo = std::min(params.convergence_min, hi);
        spec.true_convergence_knob = static_cast<int>(rng.uniform_int(lo, hi));
        spec.difficulty_factor =
            !spec.solvable ? 3 : (spec.true_convergence_knob <= params.easy_convergence_max ? 1 : 2);
        spec.answers.groups = params.answer_groups;
        spec.answers.noise_level = params.noise_level;
        spec.answers.residual_noise = params.residual_noise;
        spec.answers.hesitation_prob = params.hesitation_prob;
        spec.tokens = params.tokens;
        if (params.with_rewards) spec.rewards = params.reward_model;
        spec.mcts_chain_len = params.mcts_chain_len;
        spec.rebase_max_depth = params.rebase_max_depth;
        spec.cot_interval_tokens = params.cot_interval_tokens;
        spec.validate();
        out.push_back(std::move(spec));
    }
    return out;
}

// ============================================================================
// Trace replay
// ============================================================================

std::vector<ProgramDriver> replay_trace_lines(std::vector<probe::TraceLine> lines,
                                              const probe::ProbeConfig& cfg) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<probe::AnswerRecord>> grouped;
    for (auto& l : lines) {
        if (!grouped.count(l.program_id)) order.push_back(l.program_id);
        grouped[l.program_id].push_back(std::move(l.record));
    }
    std::vector<ProgramDriver> out;
    out.reserve(order.size());
    std::uint64_t id = 0;
    for (const auto& label : order) {
        out.emplace_back(id++, label, std::move(grouped[label]), cfg);
    }
    return out;
}

std::vector<ProgramDriver> replay_trace(const std::string& path, const probe::ProbeConfig& cfg) {
    return replay_trace_lines(probe::read_trace_file(path), cfg);
}

}  // namespace cdx::runtime
