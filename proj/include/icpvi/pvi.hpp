#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "icpvi/errors.hpp"

namespace icpvi {

/// Per-instance scoring record. All log quantities are base-2;
/// pvi_bits == logp_input_bits - logp_null_bits.
struct ScoredInstance {
    std::string instance_id;
    double logp_null_bits = 0.0;  // log2 p(target | null-target prompt)
    double logp_input_bits = 0.0; // log2 p(target | input-target prompt)
    double pvi_bits = 0.0;
    std::string predicted_label;
    bool correct = false;
    bool floored = false; // a missing logprob was substituted by the floor
};

inline double nat_to_bits(double nat) {
    return nat / std::numbers::ln2;
}

/// Information gain, in bits, from conditioning on the input:
/// log2(p_input) - log2(p_null).
inline double pvi_from_probs(double p_null, double p_input) {
    if (!(p_null > 0.0) || p_null > 1.0 || !(p_input > 0.0) || p_input > 1.0) {
        throw ValidationError("pvi_from_probs requires probabilities in (0, 1]");
    }
    return std::log2(p_input) - std::log2(p_null);
}

} // namespace icpvi
