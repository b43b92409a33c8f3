#include "tkit/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tkit/numerics.hpp"

namespace tkit {

namespace {

constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "enc1_in",   "enc1_rec",  "enc1_bias",  "inter_head", "inter_bias", "self_cond", "enc2_in",
    "enc2_rec",  "enc2_bias", "ctc_head",   "ctc_bias",   "embed",      "pred_in",   "pred_rec",
    "pred_bias", "pred_start", "joint_enc", "joint_pred", "joint_bias", "joint_out",
};

struct Shape {
    std::size_t rows;
    std::size_t cols;
};

Shape param_shape(Param p, const ModelDims &d) {
    const auto H = d.hidden, F = d.input_dim, V = d.vocab;
    switch (p) {
    case Param::enc1_in:
        return {H, F};
    case Param::enc1_rec:
    case Param::enc2_in:
    case Param::enc2_rec:
    case Param::pred_in:
    case Param::pred_rec:
    case Param::joint_enc:
    case Param::joint_pred:
        return {H, H};
    case Param::enc1_bias:
    case Param::enc2_bias:
    case Param::pred_bias:
    case Param::pred_start:
    case Param::joint_bias:
        return {1, H};
    case Param::inter_head:
    case Param::ctc_head:
    case Param::joint_out:
        return {V, H};
    case Param::inter_bias:
    case Param::ctc_bias:
        return {1, V};
    case Param::self_cond:
        return {H, V};
    case Param::embed:
        return {V - 1, H};
    }
    throw std::logic_error("param_shape: unknown parameter");
}

// y = W x (+ b)
void affine(const Matrix &w, std::span<const double> x, const Matrix *bias, std::span<double> y) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double *wr = w.data.data() + r * w.cols;
        double acc = bias ? bias->data[r] : 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) {
            acc += wr[c] * x[c];
        }
        y[r] = acc;
    }
}

// y += W x
void add_matvec(const Matrix &w, std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double *wr = w.data.data() + r * w.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols; ++c) {
            acc += wr[c] * x[c];
        }
        y[r] += acc;
    }
}

// y += W^T g
void add_matvec_t(const Matrix &w, std::span<const double> g, std::span<double> y) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double gr = g[r];
        if (gr == 0.0) {
            continue;
        }
        const double *wr = w.data.data() + r * w.cols;
        for (std::size_t c = 0; c < w.cols; ++c) {
            y[c] += wr[c] * gr;
        }
    }
}

// dW += g x^T
void add_outer(std::span<const double> g, std::span<const double> x, Matrix &dw) {
    for (std::size_t r = 0; r < dw.rows; ++r) {
        const double gr = g[r];
        if (gr == 0.0) {
            continue;
        }
        double *dr = dw.data.data() + r * dw.cols;
        for (std::size_t c = 0; c < dw.cols; ++c) {
            dr[c] += gr * x[c];
        }
    }
}

void add_into(std::span<const double> g, Matrix &bias) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        bias.data[i] += g[i];
    }
}

void apply_tanh(std::span<double> v) {
    for (double &x : v) {
        x = std::tanh(x);
    }
}

// dpre = dh * (1 - h^2), in place on dh.
void tanh_backward(std::span<const double> h, std::span<double> dh) {
    for (std::size_t i = 0; i < h.size(); ++i) {
        dh[i] *= 1.0 - h[i] * h[i];
    }
}

std::size_t embed_row(const ToyModel &model, int label) {
    if (label <= 0 || static_cast<std::size_t>(label) >= model.dims.vocab) {
        throw std::invalid_argument("predict: label " + std::to_string(label) +
                                    " outside the text vocabulary");
    }
    return static_cast<std::size_t>(label - 1);
}

} // namespace

std::string_view param_name(Param p) { return kParamNames[static_cast<std::size_t>(p)]; }

// ─── ParamSet ───────────────────────────────────────────────────────────────

ParamSet::ParamSet(const ModelDims &dims) {
    if (dims.hidden == 0 || dims.input_dim == 0 || dims.vocab < 2) {
        throw std::invalid_argument("ModelDims: need input_dim >= 1, hidden >= 1, vocab >= 2");
    }
    for (std::size_t i = 0; i < kParamCount; ++i) {
        const auto s = param_shape(static_cast<Param>(i), dims);
        mats_[i] = Matrix(s.rows, s.cols);
    }
}

std::size_t ParamSet::total_size() const {
    std::size_t n = 0;
    for (const auto &m : mats_) {
        n += m.size();
    }
    return n;
}

void ParamSet::zero() {
    for (auto &m : mats_) {
        std::fill(m.data.begin(), m.data.end(), 0.0);
    }
}

void ParamSet::add_scaled(const ParamSet &other, double scale) {
    for (std::size_t i = 0; i < kParamCount; ++i) {
        auto &dst = mats_[i].data;
        const auto &src = other.mats_[i].data;
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] += scale * src[j];
        }
    }
}

double ParamSet::squared_norm() const {
    double n = 0.0;
    for (const auto &m : mats_) {
        for (double v : m.data) {
            n += v * v;
        }
    }
    return n;
}

ToyModel ToyModel::initialize(const ModelDims &dims, bool self_condition, std::uint64_t seed) {
    ToyModel model{dims, self_condition, ParamSet(dims)};
    SeededRng rng(seed, 0x1417);
    for (std::size_t i = 0; i < kParamCount; ++i) {
        auto &m = model.params.all()[i];
        // Vectors and the embedding table use H as fan-in; weights their column count.
        const auto p = static_cast<Param>(i);
        const bool weight = m.rows > 1 && p != Param::embed;
        const double fan_in = static_cast<double>(weight ? m.cols : dims.hidden);
        const double bound = 1.0 / std::sqrt(fan_in);
        for (double &v : m.data) {
            v = (2.0 * rng.uniform() - 1.0) * bound;
        }
    }
    return model;
}

// ─── Encoder ────────────────────────────────────────────────────────────────

EncoderOutput encode(const ToyModel &model, const Matrix &features, bool self_condition) {
    const auto &P = model.params;
    const auto H = model.dims.hidden, V = model.dims.vocab;
    if (features.rows == 0) {
        throw std::invalid_argument("encode: T must be at least 1");
    }
    if (features.cols != model.dims.input_dim) {
        throw std::invalid_argument("encode: feature width " + std::to_string(features.cols) +
                                    " differs from model input_dim " +
                                    std::to_string(model.dims.input_dim));
    }
    const std::size_t T = features.rows;
    EncoderOutput out;
    out.self_condition = self_condition;
    out.features = features;
    out.h_inter = Matrix(T, H);
    out.inter_logits = Matrix(T, V);
    out.inter_post = Matrix(T, V);
    out.layer2_in = Matrix(T, H);
    out.h_enc = Matrix(T, H);
    out.ctc_logits = Matrix(T, V);

    for (std::size_t t = 0; t < T; ++t) {
        auto h1 = out.h_inter.row(t);
        affine(P[Param::enc1_in], features.row(t), &P[Param::enc1_bias], h1);
        if (t > 0) {
            add_matvec(P[Param::enc1_rec], out.h_inter.row(t - 1), h1);
        }
        apply_tanh(h1);

        affine(P[Param::inter_head], h1, &P[Param::inter_bias], out.inter_logits.row(t));
        const auto q = softmax(out.inter_logits.row(t));
        std::copy(q.begin(), q.end(), out.inter_post.row(t).begin());

        auto z = out.layer2_in.row(t);
        std::copy(h1.begin(), h1.end(), z.begin());
        if (self_condition) {
            add_matvec(P[Param::self_cond], q, z);
        }

        auto h2 = out.h_enc.row(t);
        affine(P[Param::enc2_in], z, &P[Param::enc2_bias], h2);
        if (t > 0) {
            add_matvec(P[Param::enc2_rec], out.h_enc.row(t - 1), h2);
        }
        apply_tanh(h2);

        affine(P[Param::ctc_head], h2, &P[Param::ctc_bias], out.ctc_logits.row(t));
    }
    return out;
}

// ─── Prediction network ─────────────────────────────────────────────────────

std::vector<double> predict_step(const ToyModel &model, std::span<const double> state, int label) {
    const auto &P = model.params;
    const auto row = embed_row(model, label);
    std::vector<double> next(model.dims.hidden);
    affine(P[Param::pred_in], P[Param::embed].row(row), &P[Param::pred_bias], next);
    add_matvec(P[Param::pred_rec], state, next);
    apply_tanh(next);
    return next;
}

Matrix predict(const ToyModel &model, std::span<const int> history) {
    const auto H = model.dims.hidden;
    Matrix states(history.size() + 1, H);
    const auto &start = model.params[Param::pred_start].data;
    std::copy(start.begin(), start.end(), states.row(0).begin());
    for (std::size_t u = 0; u < history.size(); ++u) {
        const auto next = predict_step(model, states.row(u), history[u]);
        std::copy(next.begin(), next.end(), states.row(u + 1).begin());
    }
    return states;
}

// ─── Joint network ──────────────────────────────────────────────────────────

LogitLattice joint_logits(const ToyModel &model, const Matrix &h_enc, const Matrix &h_pre,
                          std::optional<std::span<const int>> label_map, JointCache *cache) {
    const auto &P = model.params;
    const auto H = model.dims.hidden, V = model.dims.vocab;
    if (h_enc.cols != H || h_pre.cols != H || h_enc.rows == 0 || h_pre.rows == 0) {
        throw std::invalid_argument("joint_logits: representation shapes do not match the model");
    }
    std::vector<int> rows;
    if (label_map) {
        rows.assign(label_map->begin(), label_map->end());
        for (int id : rows) {
            if (id < 0 || static_cast<std::size_t>(id) >= V) {
                throw std::invalid_argument("joint_logits: vocabulary id " + std::to_string(id) +
                                            " >= |V| = " + std::to_string(V));
            }
        }
    } else {
        rows.resize(V);
        std::iota(rows.begin(), rows.end(), 0);
    }

    const std::size_t T = h_enc.rows, W = h_pre.rows, L = rows.size();
    Matrix enc_proj(T, H), pred_proj(W, H), hidden(T * W, H);
    for (std::size_t t = 0; t < T; ++t) {
        affine(P[Param::joint_enc], h_enc.row(t), nullptr, enc_proj.row(t));
    }
    for (std::size_t u = 0; u < W; ++u) {
        affine(P[Param::joint_pred], h_pre.row(u), &P[Param::joint_bias], pred_proj.row(u));
    }

    LogitLattice lattice(T, W - 1, L,
                         label_map ? std::optional<std::vector<int>>(rows) : std::nullopt);
    const auto &out = P[Param::joint_out];
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t u = 0; u < W; ++u) {
            auto a = hidden.row(t * W + u);
            for (std::size_t h = 0; h < H; ++h) {
                a[h] = std::tanh(enc_proj(t, h) + pred_proj(u, h));
            }
            auto s = lattice.at(t, u);
            for (std::size_t r = 0; r < L; ++r) {
                const double *o = out.data.data() + static_cast<std::size_t>(rows[r]) * H;
                double acc = 0.0;
                for (std::size_t h = 0; h < H; ++h) {
                    acc += o[h] * a[h];
                }
                s[r] = acc;
            }
        }
    }
    if (cache) {
        cache->enc_proj = std::move(enc_proj);
        cache->pred_proj = std::move(pred_proj);
        cache->hidden = std::move(hidden);
        cache->rows = std::move(rows);
    }
    return lattice;
}

LogitLattice joint_logits(const ToyModel &model, const Matrix &h_enc, const Matrix &h_pre,
                          const SampledVocab &vocab, JointCache *cache) {
    return joint_logits(model, h_enc, h_pre, std::span<const int>(vocab.label_map()), cache);
}

// ─── Backward ───────────────────────────────────────────────────────────────

void backward(const ToyModel &model, const ForwardCache &cache, const UpstreamGrads &upstream,
              const LossWeights &weights, ParamSet &grads) {
    const auto &P = model.params;
    const auto H = model.dims.hidden, V = model.dims.vocab;
    const auto &enc = cache.enc;
    const std::size_t T = enc.frames();
    const std::size_t W = cache.h_pre.rows;
    const auto &jc = cache.joint;
    const std::size_t L = jc.rows.size();

    for (std::size_t i = 0; i < kParamCount; ++i) {
        const auto s = param_shape(static_cast<Param>(i), model.dims);
        if (grads.all()[i].rows != s.rows || grads.all()[i].cols != s.cols) {
            throw std::invalid_argument("backward: gradient buffers do not match the model");
        }
    }
    if (enc.h_enc.cols != H || enc.features.cols != model.dims.input_dim ||
        cache.h_pre.cols != H || W != cache.history.size() + 1) {
        throw std::invalid_argument("backward: forward cache does not match the model");
    }
    if (upstream.lattice) {
        if (jc.hidden.rows != T * W || upstream.lattice->size() != T * W * L) {
            throw std::invalid_argument("backward: lattice gradient does not match the cache");
        }
    }
    if ((upstream.ctc && (upstream.ctc->rows != T || upstream.ctc->cols != V)) ||
        (upstream.inter && (upstream.inter->rows != T || upstream.inter->cols != V))) {
        throw std::invalid_argument("backward: CTC gradient does not match the cache");
    }

    Matrix d_enc(T, H);
    Matrix d_pre(W, H);

    // Joint network.
    if (upstream.lattice && weights.transducer != 0.0) {
        const auto &out = P[Param::joint_out];
        auto &d_out = grads[Param::joint_out];
        Matrix d_enc_proj(T, H), d_pred_proj(W, H);
        std::vector<double> da(H);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t u = 0; u < W; ++u) {
                const auto a = jc.hidden.row(t * W + u);
                const double *g = upstream.lattice->data() + (t * W + u) * L;
                std::fill(da.begin(), da.end(), 0.0);
                for (std::size_t r = 0; r < L; ++r) {
                    const double gr = weights.transducer * g[r];
                    const std::size_t row = static_cast<std::size_t>(jc.rows[r]);
                    const double *o = out.data.data() + row * H;
                    double *d_o = d_out.data.data() + row * H;
                    for (std::size_t h = 0; h < H; ++h) {
                        d_o[h] += gr * a[h];
                        da[h] += gr * o[h];
                    }
                }
                tanh_backward(a, da);
                for (std::size_t h = 0; h < H; ++h) {
                    d_enc_proj(t, h) += da[h];
                    d_pred_proj(u, h) += da[h];
                }
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            add_outer(d_enc_proj.row(t), enc.h_enc.row(t), grads[Param::joint_enc]);
            add_matvec_t(P[Param::joint_enc], d_enc_proj.row(t), d_enc.row(t));
        }
        for (std::size_t u = 0; u < W; ++u) {
            add_outer(d_pred_proj.row(u), cache.h_pre.row(u), grads[Param::joint_pred]);
            add_into(d_pred_proj.row(u), grads[Param::joint_bias]);
            add_matvec_t(P[Param::joint_pred], d_pred_proj.row(u), d_pre.row(u));
        }
    }

    // Prediction network, back through the label recurrence.
    {
        std::vector<double> carry(H, 0.0);
        for (std::size_t u = W - 1; u >= 1; --u) {
            std::vector<double> dh(H);
            for (std::size_t h = 0; h < H; ++h) {
                dh[h] = d_pre(u, h) + carry[h];
            }
            tanh_backward(cache.h_pre.row(u), dh);
            const auto row = embed_row(model, cache.history[u - 1]);
            add_outer(dh, P[Param::embed].row(row), grads[Param::pred_in]);
            add_matvec_t(P[Param::pred_in], dh, grads[Param::embed].row(row));
            add_outer(dh, cache.h_pre.row(u - 1), grads[Param::pred_rec]);
            add_into(dh, grads[Param::pred_bias]);
            std::fill(carry.begin(), carry.end(), 0.0);
            add_matvec_t(P[Param::pred_rec], dh, carry);
        }
        for (std::size_t h = 0; h < H; ++h) {
            grads[Param::pred_start].data[h] += d_pre(0, h) + carry[h];
        }
    }

    // Final CTC head.
    if (upstream.ctc && weights.ctc != 0.0) {
        std::vector<double> g(V);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t v = 0; v < V; ++v) {
                g[v] = weights.ctc * (*upstream.ctc)(t, v);
            }
            add_outer(g, enc.h_enc.row(t), grads[Param::ctc_head]);
            add_into(g, grads[Param::ctc_bias]);
            add_matvec_t(P[Param::ctc_head], g, d_enc.row(t));
        }
    }

    // Encoder layer 2 (BPTT).
    Matrix d_z(T, H);
    {
        std::vector<double> carry(H, 0.0);
        for (std::size_t t = T; t-- > 0;) {
            std::vector<double> dh(H);
            for (std::size_t h = 0; h < H; ++h) {
                dh[h] = d_enc(t, h) + carry[h];
            }
            tanh_backward(enc.h_enc.row(t), dh);
            add_outer(dh, enc.layer2_in.row(t), grads[Param::enc2_in]);
            add_matvec_t(P[Param::enc2_in], dh, d_z.row(t));
            add_into(dh, grads[Param::enc2_bias]);
            std::fill(carry.begin(), carry.end(), 0.0);
            if (t > 0) {
                add_outer(dh, enc.h_enc.row(t - 1), grads[Param::enc2_rec]);
                add_matvec_t(P[Param::enc2_rec], dh, carry);
            }
        }
    }

    // Self-conditioning and the intermediate head, then layer 1 (BPTT).
    Matrix d_h1 = d_z;
    {
        std::vector<double> d_logits(V), dq(V);
        for (std::size_t t = 0; t < T; ++t) {
            std::fill(d_logits.begin(), d_logits.end(), 0.0);
            const auto q = enc.inter_post.row(t);
            if (enc.self_condition) {
                add_outer(d_z.row(t), q, grads[Param::self_cond]);
                std::fill(dq.begin(), dq.end(), 0.0);
                add_matvec_t(P[Param::self_cond], d_z.row(t), dq);
                double dot = 0.0;
                for (std::size_t v = 0; v < V; ++v) {
                    dot += q[v] * dq[v];
                }
                for (std::size_t v = 0; v < V; ++v) {
                    d_logits[v] += q[v] * (dq[v] - dot);
                }
            }
            if (upstream.inter && weights.inter != 0.0) {
                for (std::size_t v = 0; v < V; ++v) {
                    d_logits[v] += weights.inter * (*upstream.inter)(t, v);
                }
            }
            add_outer(d_logits, enc.h_inter.row(t), grads[Param::inter_head]);
            add_into(d_logits, grads[Param::inter_bias]);
            add_matvec_t(P[Param::inter_head], d_logits, d_h1.row(t));
        }

        std::vector<double> carry(H, 0.0);
        for (std::size_t t = T; t-- > 0;) {
            std::vector<double> dh(H);
            for (std::size_t h = 0; h < H; ++h) {
                dh[h] = d_h1(t, h) + carry[h];
            }
            tanh_backward(enc.h_inter.row(t), dh);
            add_outer(dh, enc.features.row(t), grads[Param::enc1_in]);
            add_into(dh, grads[Param::enc1_bias]);
            std::fill(carry.begin(), carry.end(), 0.0);
            if (t > 0) {
                add_outer(dh, enc.h_inter.row(t - 1), grads[Param::enc1_rec]);
                add_matvec_t(P[Param::enc1_rec], dh, carry);
            }
        }
    }
}

// ─── Checkpoints ────────────────────────────────────────────────────────────

namespace {

constexpr char kMagic[4] = {'T', 'K', 'I', 'T'};

void put_u32(std::ostream &os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        os.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f64(std::ostream &os, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) {
        os.put(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
}

std::uint64_t get_le(std::istream &is, int bytes, const std::filesystem::path &path) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) {
            throw std::runtime_error(path.string() + ": checkpoint truncated");
        }
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

} // namespace

void write_checkpoint(const std::filesystem::path &path, const ToyModel &model) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw std::runtime_error(path.string() + ": cannot open for writing");
    }
    os.write(kMagic, 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<std::uint32_t>(model.dims.input_dim));
    put_u32(os, static_cast<std::uint32_t>(model.dims.hidden));
    put_u32(os, static_cast<std::uint32_t>(model.dims.vocab));
    put_u32(os, model.self_condition ? 1u : 0u);
    for (const auto &m : model.params.all()) {
        for (double v : m.data) {
            put_f64(os, v);
        }
    }
    if (!os) {
        throw std::runtime_error(path.string() + ": write failed");
    }
}

ToyModel read_checkpoint(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error(path.string() + ": cannot open checkpoint");
    }
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || !std::equal(magic, magic + 4, kMagic)) {
        throw std::runtime_error(path.string() + ": bad checkpoint magic (expected TKIT)");
    }
    const auto version = get_le(is, 4, path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                                 std::to_string(version));
    }
    ModelDims dims;
    dims.input_dim = get_le(is, 4, path);
    dims.hidden = get_le(is, 4, path);
    dims.vocab = get_le(is, 4, path);
    const bool sc = get_le(is, 4, path) != 0;
    ToyModel model{dims, sc, ParamSet(dims)};
    for (auto &m : model.params.all()) {
        for (double &v : m.data) {
            v = std::bit_cast<double>(get_le(is, 8, path));
        }
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error(path.string() + ": trailing bytes after parameters");
    }
    return model;
}

} // namespace tkit
