#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tkit/sampler.hpp"
#include "tkit/tensor.hpp"

namespace tkit {

struct ModelDims {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    std::size_t vocab = 0; // includes the blank at id 0

    friend bool operator==(const ModelDims &, const ModelDims &) = default;
};

/// Parameter arrays in declaration (and checkpoint) order.
enum class Param : std::size_t {
    enc1_in,    // H x F
    enc1_rec,   // H x H
    enc1_bias,  // 1 x H
    inter_head, // V x H
    inter_bias, // 1 x V
    self_cond,  // H x V
    enc2_in,    // H x H
    enc2_rec,   // H x H
    enc2_bias,  // 1 x H
    ctc_head,   // V x H
    ctc_bias,   // 1 x V
    embed,      // (V-1) x H, row id-1; blank is never embedded
    pred_in,    // H x H
    pred_rec,   // H x H
    pred_bias,  // 1 x H
    pred_start, // 1 x H
    joint_enc,  // H x H
    joint_pred, // H x H
    joint_bias, // 1 x H
    joint_out,  // V x H
};
inline constexpr std::size_t kParamCount = 20;

std::string_view param_name(Param p);

/// Fixed set of named matrices shaped by ModelDims. Used for both model
/// weights and their gradients.
class ParamSet {
public:
    ParamSet() = default;
    explicit ParamSet(const ModelDims &dims);

    Matrix &operator[](Param p) { return mats_[static_cast<std::size_t>(p)]; }
    const Matrix &operator[](Param p) const { return mats_[static_cast<std::size_t>(p)]; }
    std::array<Matrix, kParamCount> &all() { return mats_; }
    const std::array<Matrix, kParamCount> &all() const { return mats_; }

    std::size_t total_size() const;
    void zero();
    /// this += scale * other
    void add_scaled(const ParamSet &other, double scale);
    double squared_norm() const;

    friend bool operator==(const ParamSet &, const ParamSet &) = default;

private:
    std::array<Matrix, kParamCount> mats_;
};

/// Two-layer tanh recurrent encoder with intermediate and final CTC heads,
/// optional self-conditioning, a one-layer tanh prediction network and an
/// additive tanh joint network.
struct ToyModel {
    ModelDims dims;
    bool self_condition = false;
    ParamSet params;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from `seed`.
    static ToyModel initialize(const ModelDims &dims, bool self_condition, std::uint64_t seed);
};

// ─── Forward ────────────────────────────────────────────────────────────────

struct EncoderOutput {
    Matrix features;     // T x F (kept for backprop)
    Matrix h_inter;      // T x H, layer-1 output
    Matrix inter_logits; // T x V
    Matrix inter_post;   // T x V, softmax of inter_logits
    Matrix layer2_in;    // T x H
    Matrix h_enc;        // T x H, layer-2 output
    Matrix ctc_logits;   // T x V
    bool self_condition = false;

    std::size_t frames() const { return h_enc.rows; }
};

EncoderOutput encode(const ToyModel &model, const Matrix &features, bool self_condition);
inline EncoderOutput encode(const ToyModel &model, const Matrix &features) {
    return encode(model, features, model.self_condition);
}

/// (U+1) x H prediction states; row u has consumed history[0..u).
Matrix predict(const ToyModel &model, std::span<const int> history);

/// One recurrence step of the prediction network.
std::vector<double> predict_step(const ToyModel &model, std::span<const double> state, int label);

struct JointCache {
    Matrix enc_proj;  // T x H
    Matrix pred_proj; // (U+1) x H
    Matrix hidden;    // T*(U+1) x H, tanh activations
    std::vector<int> rows;
};

/// Logits s[t,u,r] = O[rows[r]] . tanh(W_e h_enc[t] + W_p h_pre[u] + b). With a
/// label map only the selected output rows are evaluated.
LogitLattice joint_logits(const ToyModel &model, const Matrix &h_enc, const Matrix &h_pre,
                          std::optional<std::span<const int>> label_map = std::nullopt,
                          JointCache *cache = nullptr);
LogitLattice joint_logits(const ToyModel &model, const Matrix &h_enc, const Matrix &h_pre,
                          const SampledVocab &vocab, JointCache *cache = nullptr);

/// Everything backward() needs from one example's forward pass.
struct ForwardCache {
    EncoderOutput enc;
    std::vector<int> history;
    Matrix h_pre;
    JointCache joint;
};

struct LossWeights {
    double transducer = 1.0;
    double ctc = 0.5;
    double inter = 0.3;
};

/// Upstream gradients of the three losses. Null members contribute nothing.
struct UpstreamGrads {
    const LogitBuffer *lattice = nullptr; // d L_transducer / d s
    const Matrix *ctc = nullptr;          // d L_CTC / d ctc_logits
    const Matrix *inter = nullptr;        // d L_InterCTC / d inter_logits
};

/// Accumulates into `grads` the gradient of
/// w.transducer * L_transducer + w.ctc * L_CTC + w.inter * L_InterCTC.
void backward(const ToyModel &model, const ForwardCache &cache, const UpstreamGrads &upstream,
              const LossWeights &weights, ParamSet &grads);

// ─── Checkpoints ────────────────────────────────────────────────────────────

/// Little-endian binary: "TKIT", u32 version, u32 input_dim, u32 hidden,
/// u32 vocab, u32 self_condition, then every parameter array in declaration
/// order as row-major float64.
void write_checkpoint(const std::filesystem::path &path, const ToyModel &model);
ToyModel read_checkpoint(const std::filesystem::path &path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace tkit
