#include "tkit/memory_model.hpp"

#include <stdexcept>

namespace tkit {

void MemConfig::validate() const {
    if (frames == 0 || vocab_size == 0 || batch == 0 || hidden == 0 || input_dim == 0 ||
        element_bytes == 0) {
        throw std::invalid_argument("MemConfig: T, vocab_size, batch, hidden, input_dim and "
                                    "element_bytes must be positive");
    }
    if (sampled_size && (*sampled_size == 0 || *sampled_size > vocab_size)) {
        throw std::invalid_argument("MemConfig: sampled_size must lie in [1, vocab_size]");
    }
}

std::size_t encoder_param_count(std::size_t F, std::size_t H, std::size_t V) {
    const std::size_t layer1 = H * F + H * H + H;
    const std::size_t layer2 = H * H + H * H + H;
    const std::size_t heads = 2 * (V * H + V);
    const std::size_t self_cond = H * V;
    return layer1 + layer2 + heads + self_cond;
}

std::size_t predictor_param_count(std::size_t H, std::size_t V) {
    return (V - 1) * H + 2 * H * H + 2 * H;
}

std::size_t joint_param_count(std::size_t H, std::size_t V) { return 2 * H * H + H + V * H; }

std::size_t logit_tensor_bytes(const MemConfig &cfg) {
    cfg.validate();
    const std::size_t elements =
        cfg.batch * cfg.frames * (cfg.target_length + 1) * cfg.label_axis();
    return elements * cfg.element_bytes * (cfg.count_gradients ? 2 : 1);
}

MemoryReport memory_report(const MemConfig &cfg) {
    cfg.validate();
    const std::size_t B = cfg.batch, T = cfg.frames, W = cfg.target_length + 1;
    const std::size_t H = cfg.hidden, F = cfg.input_dim, V = cfg.vocab_size;
    const std::size_t e = cfg.element_bytes;

    const std::size_t enc_params = encoder_param_count(F, H, V);
    const std::size_t pred_params = predictor_param_count(H, V);
    const std::size_t joint_params = joint_param_count(H, V);

    std::size_t enc_frame = F + 2 * H + 2 * V;
    if (cfg.self_condition) {
        enc_frame += H + V;
    }

    MemoryReport r;
    r.encoder = (enc_params + B * T * enc_frame) * e;
    r.predictor = (pred_params + B * W * H) * e;
    r.joint = (joint_params + B * (T * H + W * H + T * W * H)) * e;
    r.logit_tensor = logit_tensor_bytes(cfg);
    r.gradients = cfg.count_gradients ? (enc_params + pred_params + joint_params) * e : 0;
    return r;
}

std::vector<MemoryReport::Row> MemoryReport::rows() const {
    return {{"encoder", encoder},           {"predictor", predictor}, {"joint", joint},
            {"logit_tensor", logit_tensor}, {"gradients", gradients}, {"total", total()}};
}

} // namespace tkit
