#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "tkit/tensor.hpp"

namespace tkit {

/// One training configuration for analytic memory accounting.
struct MemConfig {
    std::size_t frames = 0;        // T
    std::size_t target_length = 0; // U
    std::size_t vocab_size = 0;    // |V|, blank included
    std::optional<std::size_t> sampled_size;
    std::size_t batch = 1;
    std::size_t hidden = 0;    // H
    std::size_t input_dim = 0; // F
    std::size_t element_bytes = 4;
    bool self_condition = false;
    bool count_gradients = true;

    std::size_t label_axis() const { return sampled_size.value_or(vocab_size); }
    void validate() const;
};

/// Byte accounting per component. Closed forms, with B = batch,
/// W = U + 1, L = label axis size and e = element_bytes:
///
///   encoder      params(enc1, inter head, self-cond map, enc2, ctc head)
///                + B*T*(F + 2H + 2V [+ H + V if self-conditioned]) activations
///   predictor    params(embed, pred_in, pred_rec, bias, start) + B*W*H states
///   joint        params(W_e, W_p, b, O) + B*(T*H + W*H + T*W*H) activations
///   logit_tensor B*T*W*L logits, doubled when gradients are counted
///   gradients    one gradient per parameter when gradients are counted
///
/// every count multiplied by e. Activations are those a training step keeps
/// for the backward pass.
struct MemoryReport {
    std::size_t encoder = 0;
    std::size_t predictor = 0;
    std::size_t joint = 0;
    std::size_t logit_tensor = 0;
    std::size_t gradients = 0;

    std::size_t total() const { return encoder + predictor + joint + logit_tensor + gradients; }

    struct Row {
        std::string component;
        std::size_t bytes;
    };
    /// Components in fixed order followed by "total".
    std::vector<Row> rows() const;
};

/// B * T * (U+1) * L * element_bytes, doubled when gradients are counted.
std::size_t logit_tensor_bytes(const MemConfig &cfg);

MemoryReport memory_report(const MemConfig &cfg);

/// Parameter element counts for the toy architecture.
std::size_t encoder_param_count(std::size_t input_dim, std::size_t hidden, std::size_t vocab);
std::size_t predictor_param_count(std::size_t hidden, std::size_t vocab);
std::size_t joint_param_count(std::size_t hidden, std::size_t vocab);

} // namespace tkit
