#pragma once

#include <cstdint>
#include <exception>
#include <set>
#include <string>
#include <vector>

#include "icpvi/backend.hpp"
#include "icpvi/dataset.hpp"
#include "icpvi/detail/parallel.hpp"
#include "icpvi/errors.hpp"
#include "icpvi/prompting.hpp"
#include "icpvi/pvi.hpp"

namespace icpvi {

/// Everything that determines a run's outputs given fixed backend responses.
struct RunConfig {
    std::string dataset_name;
    std::string model_id;
    std::size_t shots = 0;
    std::uint64_t seed = 0;
    std::string template_id;
    int top_k = 5;
    FloorPolicy floor_policy{};
    std::size_t max_in_flight = 4;
};

namespace detail {

struct TargetScore {
    double logprob_nat = 0.0;
    bool floored = false;
};

inline TargetScore score_target(Backend& backend, const std::string& model_id, const std::string& prompt,
                                const std::string& token, int top_k, const FloorPolicy& policy) {
    try {
        return {backend.score({model_id, prompt, token, top_k}).logprob_nat, false};
    } catch (const MissingTargetLogprob&) {
        if (policy.mode != FloorPolicy::Mode::floor) throw;
        return {policy.floor_logprob_nat, true};
    }
}

} // namespace detail

/// Scores every test instance: builds its prompt pair, obtains the target's
/// log-probability under both prompts, converts to bits, and predicts a label
/// by argmax over the label-index tokens under the input-target prompt.
/// Output order equals test order regardless of scoring concurrency.
inline std::vector<ScoredInstance> score_run(const Dataset& dataset, const ExemplarSet& exemplars,
                                             const PromptTemplate& tmpl, Backend& backend,
                                             const RunConfig& config) {
    tmpl.validate_against(dataset.label_space);
    std::set<std::string_view> train_ids;
    for (const auto& inst : dataset.train) train_ids.insert(inst.id);
    for (const auto& ex : exemplars.exemplars) {
        if (!train_ids.count(ex.id)) {
            throw ValidationError("exemplar '" + ex.id + "' is not in the training split");
        }
    }

    const std::vector<std::string> candidate_tokens = label_index_tokens(dataset.label_space);
    const std::size_t n = dataset.test.size();
    std::vector<ScoredInstance> results(n);
    std::vector<std::exception_ptr> failures(n);

    detail::parallel_for(n, config.max_in_flight, [&](std::size_t i) {
        const Instance& query = dataset.test[i];
        try {
            const PromptPair pair = build_prompt_pair(tmpl, exemplars, query, dataset.label_space);
            const auto null_score = detail::score_target(backend, config.model_id, pair.null_target,
                                                         pair.target_token, config.top_k, config.floor_policy);
            const auto input_score = detail::score_target(backend, config.model_id, pair.input_target,
                                                          pair.target_token, config.top_k, config.floor_policy);
            const Prediction pred = predict_token(backend, config.model_id, pair.input_target,
                                                  candidate_tokens, config.top_k, config.floor_policy);

            ScoredInstance& out = results[i];
            out.instance_id = query.id;
            out.logp_null_bits = nat_to_bits(null_score.logprob_nat);
            out.logp_input_bits = nat_to_bits(input_score.logprob_nat);
            out.pvi_bits = out.logp_input_bits - out.logp_null_bits;
            out.predicted_label = dataset.label_space.label_at(pred.index);
            out.correct = (out.predicted_label == query.gold_label);
            out.floored = null_score.floored || input_score.floored || pred.any_floored;
        } catch (const MissingTargetLogprob& e) {
            failures[i] = std::make_exception_ptr(
                MissingTargetLogprob("instance '" + query.id + "': " + e.what()));
        } catch (const BackendUnavailable& e) {
            failures[i] = std::make_exception_ptr(
                BackendUnavailable("instance '" + query.id + "': " + e.what()));
        } catch (const std::exception& e) {
            failures[i] = std::make_exception_ptr(Error("instance '" + query.id + "': " + e.what()));
        }
    });

    for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }
    return results;
}

} // namespace icpvi
