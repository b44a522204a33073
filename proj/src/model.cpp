#include "alkd/model.hpp"

#include <cmath>

#include "alkd/ops.hpp"

namespace alkd {

void ModelConfig::validate() const {
    if (n_layers == 0) throw ConfigError("n_layers must be positive");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                          std::to_string(n_heads) + ")");
    }
    if (d_ff == 0) throw ConfigError("d_ff must be positive");
    if (vocab_size <= kNumReserved) throw ConfigError("vocab_size must exceed the reserved tokens");
    if (max_len < 2) throw ConfigError("max_len must be at least 2");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
    if (teacher_dim == 0) throw ConfigError("teacher_dim must be positive");
    if (!use_projection && teacher_dim != d_model) {
        throw ConfigError("d_model (" + std::to_string(d_model) + ") differs from teacher_dim (" +
                          std::to_string(teacher_dim) + ") but use_projection is off");
    }
}

std::vector<NamedParameter> StudentModel::parameters() const {
    std::vector<NamedParameter> out{
        {"embeddings.token", token_embedding, true},
        {"embeddings.position", position_embedding, true},
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        out.push_back({p + "ln1.gain", l.ln1_gain, false});
        out.push_back({p + "ln1.bias", l.ln1_bias, false});
        out.push_back({p + "attn.wq", l.wq, true});
        out.push_back({p + "attn.bq", l.bq, false});
        out.push_back({p + "attn.wk", l.wk, true});
        out.push_back({p + "attn.bk", l.bk, false});
        out.push_back({p + "attn.wv", l.wv, true});
        out.push_back({p + "attn.bv", l.bv, false});
        out.push_back({p + "attn.wo", l.wo, true});
        out.push_back({p + "attn.bo", l.bo, false});
        out.push_back({p + "ln2.gain", l.ln2_gain, false});
        out.push_back({p + "ln2.bias", l.ln2_bias, false});
        out.push_back({p + "ffn.w1", l.w_ff1, true});
        out.push_back({p + "ffn.b1", l.b_ff1, false});
        out.push_back({p + "ffn.w2", l.w_ff2, true});
        out.push_back({p + "ffn.b2", l.b_ff2, false});
    }
    out.push_back({"final_ln.gain", final_ln_gain, false});
    out.push_back({"final_ln.bias", final_ln_bias, false});
    out.push_back({"mlm.bias", mlm_bias, false});
    if (projection.defined()) out.push_back({"projection", projection, true});
    return out;
}

void StudentModel::zero_grad() const {
    for (auto p : parameters()) p.tensor.zero_grad();
}

StudentModel StudentModel::clone() const {
    StudentModel m = *this;
    auto deep = [](Tensor& t) {
        if (t.defined()) t = t.clone();
    };
    deep(m.token_embedding);
    deep(m.position_embedding);
    for (auto& l : m.layers) {
        for (Tensor* t : {&l.ln1_gain, &l.ln1_bias, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                          &l.ln2_gain, &l.ln2_bias, &l.w_ff1, &l.b_ff1, &l.w_ff2, &l.b_ff2}) {
            deep(*t);
        }
    }
    deep(m.final_ln_gain);
    deep(m.final_ln_bias);
    deep(m.mlm_bias);
    deep(m.projection);
    return m;
}

void truncated_normal_fill(Tensor& t, double std, Rng& rng) {
    std::normal_distribution<double> normal(0.0, std);
    for (auto& v : t.data()) {
        double x;
        do {
            x = normal(rng);
        } while (std::abs(x) > 2.0 * std);
        v = to_storage(x);
    }
}

StudentModel init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, kStreamInit));
    const std::size_t d = config.d_model;
    auto weight = [&](Shape shape) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        truncated_normal_fill(t, kInitStd, rng);
        return t;
    };
    auto zeros = [](std::size_t n) { return Tensor::zeros({n}, true); };
    auto ones = [](std::size_t n) { return Tensor::full({n}, 1.0, true); };

    StudentModel m;
    m.config = config;
    m.token_embedding = weight({config.vocab_size, d});
    m.position_embedding = weight({config.max_len, d});
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        EncoderLayer l;
        l.ln1_gain = ones(d);
        l.ln1_bias = zeros(d);
        l.wq = weight({d, d});
        l.bq = zeros(d);
        l.wk = weight({d, d});
        l.bk = zeros(d);
        l.wv = weight({d, d});
        l.bv = zeros(d);
        l.wo = weight({d, d});
        l.bo = zeros(d);
        l.ln2_gain = ones(d);
        l.ln2_bias = zeros(d);
        l.w_ff1 = weight({d, config.d_ff});
        l.b_ff1 = zeros(config.d_ff);
        l.w_ff2 = weight({config.d_ff, d});
        l.b_ff2 = zeros(d);
        m.layers.push_back(std::move(l));
    }
    m.final_ln_gain = ones(d);
    m.final_ln_bias = zeros(d);
    m.mlm_bias = zeros(config.vocab_size);
    if (config.use_projection) m.projection = weight({d, config.teacher_dim});
    return m;
}

namespace {

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    return ops::add_bias(tape, ops::matmul(tape, x, w), b);
}

Tensor maybe_dropout(Tape& tape, const Tensor& x, const StudentModel& model, const EncodeOptions& options) {
    if (!options.train || model.config.dropout_rate == 0.0) return x;
    if (options.dropout_rng == nullptr) throw ContractError("training-mode encode needs a dropout generator");
    return ops::dropout(tape, x, model.config.dropout_rate, *options.dropout_rng);
}

}  // namespace

Tensor encode(Tape& tape, const StudentModel& model, const Batch& batch, const EncodeOptions& options) {
    const auto& cfg = model.config;
    const std::size_t B = batch.batch_size, L = batch.length, d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    if (L > cfg.max_len) {
        throw DataError("batch length " + std::to_string(L) + " exceeds max_len " + std::to_string(cfg.max_len));
    }
    for (TokenId id : batch.input_ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(cfg.vocab_size));
        }
    }
    std::vector<std::int32_t> positions(B * L);
    for (std::size_t i = 0; i < B * L; ++i) positions[i] = static_cast<std::int32_t>(i % L);

    Tensor x = ops::add(tape, ops::embedding(tape, model.token_embedding, batch.input_ids),
                        ops::embedding(tape, model.position_embedding, positions));
    x = maybe_dropout(tape, x, model, options);

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    auto to_heads = [&](const Tensor& t) {
        return ops::reshape(tape, ops::swap_axes_12(tape, ops::reshape(tape, t, {B, L, H, dh})), {B * H, L, dh});
    };
    for (const auto& layer : model.layers) {
        Tensor h = ops::layer_norm(tape, x, layer.ln1_gain, layer.ln1_bias, kLayerNormEps);
        Tensor q = to_heads(linear(tape, h, layer.wq, layer.bq));
        Tensor k = to_heads(linear(tape, h, layer.wk, layer.bk));
        Tensor v = to_heads(linear(tape, h, layer.wv, layer.bv));
        Tensor scores = ops::scale(tape, ops::bmm_bt(tape, q, k), inv_sqrt_dh);
        Tensor probs = ops::masked_softmax(tape, scores, batch.valid_mask, H);
        Tensor ctx = ops::bmm(tape, probs, v);
        ctx = ops::reshape(tape, ops::swap_axes_12(tape, ops::reshape(tape, ctx, {B, H, L, dh})), {B * L, d});
        Tensor attn = maybe_dropout(tape, linear(tape, ctx, layer.wo, layer.bo), model, options);
        x = ops::add(tape, x, attn);

        Tensor h2 = ops::layer_norm(tape, x, layer.ln2_gain, layer.ln2_bias, kLayerNormEps);
        Tensor ff = ops::gelu(tape, linear(tape, h2, layer.w_ff1, layer.b_ff1));
        ff = maybe_dropout(tape, linear(tape, ff, layer.w_ff2, layer.b_ff2), model, options);
        x = ops::add(tape, x, ff);
    }
    x = ops::layer_norm(tape, x, model.final_ln_gain, model.final_ln_bias, kLayerNormEps);
    return ops::reshape(tape, x, {B, L, d});
}

Tensor mlm_logits(Tape& tape, const StudentModel& model, const Tensor& hidden) {
    if (hidden.rank() != 3 || hidden.dim(2) != model.config.d_model) {
        throw DimensionError("mlm_logits: hidden states have shape " + shape_str(hidden.shape()));
    }
    const std::size_t B = hidden.dim(0), L = hidden.dim(1);
    Tensor flat = ops::reshape(tape, hidden, {B * L, model.config.d_model});
    Tensor logits = ops::add_bias(tape, ops::matmul_bt(tape, flat, model.token_embedding), model.mlm_bias);
    return ops::reshape(tape, logits, {B, L, model.config.vocab_size});
}

Tensor project(Tape& tape, const StudentModel& model, const Tensor& hidden) {
    const auto& cfg = model.config;
    if (hidden.rank() != 3 || hidden.dim(2) != cfg.d_model) {
        throw DimensionError("project: hidden states have shape " + shape_str(hidden.shape()));
    }
    if (!model.projection.defined()) {
        if (cfg.d_model != cfg.teacher_dim) {
            throw ConfigError("projection disabled but d_model != teacher_dim");
        }
        return hidden;
    }
    const std::size_t B = hidden.dim(0), L = hidden.dim(1);
    Tensor flat = ops::reshape(tape, hidden, {B * L, cfg.d_model});
    return ops::reshape(tape, ops::matmul(tape, flat, model.projection), {B, L, cfg.teacher_dim});
}

Tensor cls_states(Tape& tape, const Tensor& hidden) {
    if (hidden.rank() != 3) throw DimensionError("cls_states: expected [B, L, d], got " + shape_str(hidden.shape()));
    const std::size_t B = hidden.dim(0), L = hidden.dim(1), d = hidden.dim(2);
    std::vector<std::size_t> rows(B);
    for (std::size_t b = 0; b < B; ++b) rows[b] = b * L;
    return ops::gather_rows(tape, ops::reshape(tape, hidden, {B * L, d}), rows);
}

}  // namespace alkd
