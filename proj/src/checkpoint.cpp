#include "alkd/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <map>

#include "binary_io.hpp"

namespace alkd {
namespace {

using Reader = detail::ByteReader<CheckpointError>;

void put_name(detail::ByteWriter& w, const std::string& name) {
    if (name.size() > 0xFFFF) throw CheckpointError("name too long: " + name.substr(0, 32) + "...");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
}

std::string get_name(Reader& r, const char* what) { return r.get_string(r.get<std::uint16_t>(what), what); }

void put_floats(detail::ByteWriter& w, std::span<const double> values) {
    for (double v : values) w.put<float>(static_cast<float>(v));
}

void get_floats(Reader& r, std::span<double> out, const char* what) {
    for (auto& v : out) v = static_cast<double>(r.get<float>(what));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    const auto& c = ckpt.model.config;
    detail::ByteWriter w;
    w.put_bytes(std::string_view(Checkpoint::kMagic, 4));
    w.put<std::uint16_t>(Checkpoint::kVersion);
    for (std::size_t v : {c.n_layers, c.d_model, c.n_heads, c.d_ff, c.vocab_size, c.max_len, c.teacher_dim}) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
    }
    w.put<std::uint8_t>(c.use_projection ? 1 : 0);
    w.put<double>(c.dropout_rate);
    w.put<std::uint64_t>(ckpt.step);

    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.vocab.size()));
    for (const auto& t : ckpt.vocab.tokens()) put_name(w, t);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.metadata.size()));
    w.put_bytes(ckpt.metadata);

    auto tensors = ckpt.model.parameters();
    tensors.insert(tensors.end(), ckpt.extra.begin(), ckpt.extra.end());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& p : tensors) {
        put_name(w, p.name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p.tensor.rank()));
        for (auto e : p.tensor.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
        put_floats(w, p.tensor.data());
    }

    w.put<std::uint8_t>(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
        const auto& o = *ckpt.optimizer;
        w.put<std::uint64_t>(o.step);
        w.put<double>(o.beta1);
        w.put<double>(o.beta2);
        w.put<double>(o.eps);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(o.names.size()));
        for (std::size_t i = 0; i < o.names.size(); ++i) {
            put_name(w, o.names[i]);
            w.put<std::uint64_t>(o.m[i].size());
            put_floats(w, o.m[i]);
            put_floats(w, o.v[i]);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig* expected) {
    Reader r(bytes, "checkpoint");
    if (r.get_string(4, "magic") != std::string_view(Checkpoint::kMagic, 4)) {
        throw CheckpointError("bad magic: not an ALKC checkpoint");
    }
    const auto version = r.get<std::uint16_t>("version");
    if (version != Checkpoint::kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    ModelConfig stored;
    for (std::size_t* f : {&stored.n_layers, &stored.d_model, &stored.n_heads, &stored.d_ff, &stored.vocab_size,
                           &stored.max_len, &stored.teacher_dim}) {
        *f = r.get<std::uint32_t>("config");
    }
    stored.use_projection = r.get<std::uint8_t>("config") != 0;
    stored.dropout_rate = r.get<double>("config");

    Checkpoint ckpt;
    ckpt.step = r.get<std::uint64_t>("step");
    std::vector<std::string> tokens(r.get<std::uint32_t>("vocabulary size"));
    for (auto& t : tokens) t = get_name(r, "vocabulary token");
    ckpt.vocab = Vocab(std::move(tokens));
    ckpt.metadata = r.get_string(r.get<std::uint32_t>("metadata length"), "metadata");

    // The reference skeleton fixes which tensors must exist and their shapes.
    const ModelConfig& layout = expected ? *expected : stored;
    try {
        ckpt.model = init_model(layout, 0);
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("invalid model configuration: ") + e.what());
    }
    std::map<std::string, Tensor> slots;
    for (const auto& p : ckpt.model.parameters()) slots.emplace(p.name, p.tensor);

    const auto n_tensors = r.get<std::uint32_t>("tensor count");
    std::size_t model_tensors = 0;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const auto name = get_name(r, "tensor name");
        Shape shape(r.get<std::uint8_t>("tensor rank"));
        for (auto& e : shape) e = r.get<std::uint32_t>("tensor extent");
        auto it = slots.find(name);
        if (it == slots.end()) {
            Tensor t = Tensor::zeros(shape, true);
            get_floats(r, t.data(), "tensor data");
            ckpt.extra.push_back({name, t, true});
            continue;
        }
        if (it->second.shape() != shape) {
            throw CheckpointError("shape mismatch for tensor '" + name + "': checkpoint has " + shape_str(shape) +
                                  ", configuration expects " + shape_str(it->second.shape()));
        }
        get_floats(r, it->second.data(), "tensor data");
        ++model_tensors;
    }
    if (model_tensors != slots.size()) {
        throw CheckpointError("checkpoint is missing " + std::to_string(slots.size() - model_tensors) +
                              " model tensors");
    }
    if (expected && expected->n_heads != stored.n_heads) {
        throw CheckpointError("checkpoint has n_heads=" + std::to_string(stored.n_heads) + ", configuration expects " +
                              std::to_string(expected->n_heads));
    }
    ckpt.model.config = layout;

    if (r.get<std::uint8_t>("optimizer flag")) {
        OptimizerState o;
        o.step = r.get<std::uint64_t>("optimizer step");
        o.beta1 = r.get<double>("optimizer beta1");
        o.beta2 = r.get<double>("optimizer beta2");
        o.eps = r.get<double>("optimizer eps");
        const auto count = r.get<std::uint32_t>("optimizer tensor count");
        for (std::uint32_t i = 0; i < count; ++i) {
            o.names.push_back(get_name(r, "optimizer tensor name"));
            const auto n = r.get<std::uint64_t>("optimizer tensor size");
            o.m.emplace_back(n);
            o.v.emplace_back(n);
            get_floats(r, o.m.back(), "first moment");
            get_floats(r, o.v.back(), "second moment");
        }
        ckpt.optimizer = std::move(o);
    }
    if (r.remaining() != 0) {
        throw CheckpointError(std::to_string(r.remaining()) + " trailing bytes at offset " + std::to_string(r.offset()));
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, expected);
}

}  // namespace alkd
