#include "vtp/grpo_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace vtp::grpo {

void ClipConfig::validate() const {
    if (!(eps_low > 0.0 && eps_low < 1.0)) throw ConfigError("eps_low must lie in (0, 1)");
    if (!(eps_high > 0.0) || !std::isfinite(eps_high)) throw ConfigError("eps_high must be positive");
}

namespace {

void check_logprobs(const std::vector<double>& lp, const std::string& what) {
    for (double x : lp) {
        if (!std::isfinite(x)) throw ConfigError(what + ": non-finite log-probability");
        if (x > 0.0) throw ConfigError(what + ": log-probability above 0");
    }
}

}  // namespace

void RolloutGroup::validate() const {
    const auto k = rewards.size();
    if (k == 0) throw ConfigError("rollout group is empty");
    if (logp_new.size() != k || logp_old.size() != k) throw ConfigError("log-prob lists must have one entry per rollout");
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(rewards[i])) throw ConfigError("non-finite reward");
        if (logp_new[i].size() != logp_old[i].size()) {
            throw ConfigError("rollout " + std::to_string(i) + ": new/old log-prob lengths differ");
        }
        check_logprobs(logp_new[i], "rollout " + std::to_string(i) + " new");
        check_logprobs(logp_old[i], "rollout " + std::to_string(i) + " old");
    }
}

double compensated_sum(const std::vector<double>& xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    return s + c;
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
    if (rewards.empty()) throw ConfigError("advantages need at least one reward");
    const double mean = compensated_sum(rewards) / static_cast<double>(rewards.size());
    std::vector<double> a;
    a.reserve(rewards.size());
    for (double r : rewards) a.push_back(r - mean);
    return a;
}

BinaryWeights binary_weights(const std::vector<double>& rewards) {
    if (rewards.empty()) throw ConfigError("binary weights need at least one reward");
    BinaryWeights w;
    w.total = rewards.size();
    for (double r : rewards) {
        if (r != 0.0 && r != 1.0) throw ConfigError("reward " + std::to_string(r) + " is not binary");
        if (r == 1.0) ++w.correct;
    }
    const double frac = static_cast<double>(w.correct) / static_cast<double>(w.total);
    w.w_plus = 1.0 - frac;
    w.w_minus = -frac;
    return w;
}

Ratio policy_ratio(double logp_new_sum, double logp_old_sum) {
    if (!std::isfinite(logp_new_sum) || !std::isfinite(logp_old_sum)) throw ConfigError("log-prob sums must be finite");
    const double delta = logp_new_sum - logp_old_sum;
    static const double kMaxLog = std::log(std::numeric_limits<double>::max());
    if (delta > kMaxLog) return {std::numeric_limits<double>::max(), true};
    return {std::exp(delta), false};
}

double surrogate_term(double rho, double advantage, const ClipConfig& clip) {
    clip.validate();
    return std::min(rho * advantage, std::clamp(rho, 1.0 - clip.eps_low, 1.0 + clip.eps_high) * advantage);
}

namespace {

// Sequence terms are summed as a_i + a_i (rho_i - 1). With centred advantages the first part is
// zero by construction and is left out, so unit ratios give an exact zero.
LossResult loss_impl(const RolloutGroup& group, const std::vector<double>& advantages, const ClipConfig& clip,
                     LossMode mode, const KLPenalty* kl, bool centred) {
    clip.validate();
    group.validate();
    const std::size_t k = group.size();
    if (advantages.size() != k) throw ConfigError("one advantage per rollout required");
    const double inv_k = 1.0 / static_cast<double>(k);

    LossResult out;
    out.advantages = advantages;
    out.grad.resize(k);
    std::vector<double> terms(k);

    for (std::size_t i = 0; i < k; ++i) {
        const auto& lp = group.logp_new[i];
        const double a = out.advantages[i];
        out.grad[i].assign(lp.size(), 0.0);
        if (mode == LossMode::Token) {
            terms[i] = a * compensated_sum(lp);
            std::fill(out.grad[i].begin(), out.grad[i].end(), -a * inv_k);
            continue;
        }
        const auto ratio = policy_ratio(compensated_sum(lp), compensated_sum(group.logp_old[i]));
        out.ratio_saturated = out.ratio_saturated || ratio.saturated;
        const double rho = ratio.value;
        const double clipped_rho = std::clamp(rho, 1.0 - clip.eps_low, 1.0 + clip.eps_high);
        const double unclipped = rho * a;
        const double bounded = clipped_rho * a;
        // The clipped branch carries no gradient when it is strictly smaller.
        const bool take_clipped = bounded < unclipped;
        terms[i] = ((take_clipped ? clipped_rho : rho) - 1.0) * a;
        if (!centred) terms.push_back(a);
        out.ratios.push_back(rho);
        out.clipped.push_back(take_clipped);
        if (!take_clipped) std::fill(out.grad[i].begin(), out.grad[i].end(), -a * rho * inv_k);
    }
    out.loss = 0.0 - inv_k * compensated_sum(terms);

    if (kl && kl->coef != 0.0) {
        if (kl->logp_ref.size() != k) throw ConfigError("KL reference log-probs must match the group");
        std::vector<double> kl_terms;
        for (std::size_t i = 0; i < k; ++i) {
            const auto& lp = group.logp_new[i];
            if (kl->logp_ref[i].size() != lp.size()) throw ConfigError("KL reference length mismatch");
            for (std::size_t t = 0; t < lp.size(); ++t) {
                const double d = kl->logp_ref[i][t] - lp[t];
                kl_terms.push_back(std::exp(d) - d - 1.0);
                out.grad[i][t] += kl->coef * inv_k * (1.0 - std::exp(d));
            }
        }
        out.loss += kl->coef * inv_k * compensated_sum(kl_terms);
    }
    return out;
}

}  // namespace

LossResult grpo_loss(const RolloutGroup& group, const ClipConfig& clip, LossMode mode, const KLPenalty* kl) {
    group.validate();
    return loss_impl(group, group_advantages(group.rewards), clip, mode, kl, true);
}

LossResult grpo_loss_with_advantages(const RolloutGroup& group, const std::vector<double>& advantages,
                                     const ClipConfig& clip, LossMode mode, const KLPenalty* kl) {
    return loss_impl(group, advantages, clip, mode, kl, false);
}

NLLResult sft_nll(const SFTExample& example) {
    if (example.token_logprobs.empty()) throw ConfigError("SFT example has no tokens");
    check_logprobs(example.token_logprobs, "SFT example");
    NLLResult r;
    r.loss = -compensated_sum(example.token_logprobs);
    r.grad.assign(example.token_logprobs.size(), -1.0);
    return r;
}

}  // namespace vtp::grpo
