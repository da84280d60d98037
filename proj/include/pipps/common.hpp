#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown when a caller breaks a documented precondition (shape mismatch,
/// non-positive hyperparameter, bad configuration value).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for numerical failures that cannot be recovered by jitter or clamping.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-fatal numerical events raised while computing. These are accumulated
/// and surfaced to the caller instead of aborting: the CLI maps any of them
/// to exit code 2.
enum class Flag : std::uint32_t {
    none = 0,
    gram_jitter_escalated = 1u << 0,
    variance_floor_clamped = 1u << 1,
    covariance_jitter = 1u << 2,
    non_finite_state = 1u << 3,
    non_finite_gradient = 1u << 4,
    mixture_underflow = 1u << 5,
    baseline_fallback = 1u << 6,
    degenerate_variance = 1u << 7,
    training_diverged = 1u << 8,
};

class Flags {
public:
    constexpr Flags() = default;
    constexpr Flags(Flag f) : bits_(static_cast<std::uint32_t>(f)) {}

    void raise(Flag f) { bits_ |= static_cast<std::uint32_t>(f); }
    void merge(const Flags& other) { bits_ |= other.bits_; }
    bool has(Flag f) const { return (bits_ & static_cast<std::uint32_t>(f)) != 0; }
    bool any() const { return bits_ != 0; }
    std::uint32_t bits() const { return bits_; }

    std::vector<std::string> names() const;

private:
    std::uint32_t bits_ = 0;
};

inline void require(bool condition, const char* message) {
    if (!condition) {
        throw ContractError(message);
    }
}

}  // namespace pipps
