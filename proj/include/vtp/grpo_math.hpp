#pragma once

#include <cstddef>
#include <vector>

#include "vtp/error.hpp"

namespace vtp::grpo {

struct ClipConfig {
    double eps_low = 0.2;
    double eps_high = 0.28;

    /// Throws ConfigError unless 0 < eps_low < 1 and eps_high > 0.
    void validate() const;
};

/// K rollouts of one prompt: rewards plus per-token log-probabilities under the current and
/// the sampling policy.
struct RolloutGroup {
    std::vector<double> rewards;
    std::vector<std::vector<double>> logp_new;
    std::vector<std::vector<double>> logp_old;

    std::size_t size() const { return rewards.size(); }
    /// Throws ConfigError on K = 0, ragged per-rollout lists, positive or non-finite log-probs.
    void validate() const;
};

struct SFTExample {
    std::vector<double> token_logprobs;
};

/// Compensated (Kahan-Babuska) sum.
double compensated_sum(const std::vector<double>& xs);

/// A_i = r_i - mean(r).
std::vector<double> group_advantages(const std::vector<double>& rewards);

struct BinaryWeights {
    double w_plus = 0.0;   // 1 - M/K, applied to correct rollouts
    double w_minus = 0.0;  // -M/K, applied to incorrect rollouts
    std::size_t correct = 0;
    std::size_t total = 0;
};

/// Throws ConfigError on an empty list or an entry outside {0, 1}.
BinaryWeights binary_weights(const std::vector<double>& rewards);

struct Ratio {
    double value = 1.0;
    bool saturated = false;  // exp overflowed and was clamped to the largest finite double
};

/// rho = exp(logp_new_sum - logp_old_sum).
Ratio policy_ratio(double logp_new_sum, double logp_old_sum);

enum class LossMode { Sequence, Token };

/// Optional KL(pi_theta || pi_ref) penalty using the k3 estimator per token. Off by default.
struct KLPenalty {
    double coef = 0.0;
    std::vector<std::vector<double>> logp_ref;  // same shape as logp_new
};

struct LossResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grad;  // d loss / d logp_new[i][t]
    std::vector<double> advantages;
    std::vector<double> ratios;        // sequence mode only
    std::vector<bool> clipped;         // sequence mode: clipped branch selected and active
    bool ratio_saturated = false;
};

/// Sequence mode: -(1/K) sum_i min(rho_i A_i, clip(rho_i, 1-eps_low, 1+eps_high) A_i), rho_i from
/// summed token log-probs. Token mode: -(1/K) sum_i A_i sum_t logp_new[i][t] (the weighted-NLL
/// form; with binary rewards A_i is w_plus or w_minus).
LossResult grpo_loss(const RolloutGroup& group, const ClipConfig& clip, LossMode mode,
                     const KLPenalty* kl = nullptr);

/// Same objective with caller-supplied advantages (one per rollout) instead of r_i - mean(r).
LossResult grpo_loss_with_advantages(const RolloutGroup& group, const std::vector<double>& advantages,
                                     const ClipConfig& clip, LossMode mode, const KLPenalty* kl = nullptr);

/// min(rho A, clip(rho, 1-eps_low, 1+eps_high) A); a group's sequence loss is -(1/K) sum of these.
double surrogate_term(double rho, double advantage, const ClipConfig& clip);

struct NLLResult {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d logp[t] (always -1)
};

/// -sum_t logp[t]. Throws ConfigError on an empty example or positive log-probs.
NLLResult sft_nll(const SFTExample& example);

}  // namespace vtp::grpo
