#include "pipps/common.hpp"

#include <array>
#include <utility>

namespace pipps {

std::vector<std::string> Flags::names() const {
    static constexpr std::array<std::pair<Flag, const char*>, 9> kNames{{
        {Flag::gram_jitter_escalated, "gram_jitter_escalated"},
        {Flag::variance_floor_clamped, "variance_floor_clamped"},
        {Flag::covariance_jitter, "covariance_jitter"},
        {Flag::non_finite_state, "non_finite_state"},
        {Flag::non_finite_gradient, "non_finite_gradient"},
        {Flag::mixture_underflow, "mixture_underflow"},
        {Flag::baseline_fallback, "baseline_fallback"},
        {Flag::degenerate_variance, "degenerate_variance"},
        {Flag::training_diverged, "training_diverged"},
    }};
    std::vector<std::string> out;
    for (const auto& [flag, name] : kNames) {
        if (has(flag)) {
            out.emplace_back(name);
        }
    }
    return out;
}

}  // namespace pipps
