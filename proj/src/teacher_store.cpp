#include "alkd/teacher_store.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "binary_io.hpp"

namespace alkd {
namespace {

using Writer = detail::ByteWriter;

class Reader : public detail::ByteReader<StoreError> {
   public:
    explicit Reader(std::span<const std::uint8_t> bytes) : ByteReader(bytes, "store") {}
};

void validate(const EmbeddingStore& store) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < store.records.size(); ++i) {
        const auto& r = store.records[i];
        if (r.vector.size() != store.dim) {
            throw StoreError("record " + std::to_string(i) + " ('" + r.sample_id + "') has dimension " +
                             std::to_string(r.vector.size()) + ", store dimension is " + std::to_string(store.dim));
        }
        if (r.sample_id.size() > 0xFFFF) throw StoreError("record " + std::to_string(i) + " id longer than 65535 bytes");
        if (r.transcript.size() > 0xFFFFFFFFu) throw StoreError("record " + std::to_string(i) + " transcript too long");
        if (!seen.insert(r.sample_id).second) {
            throw StoreError("duplicate sample id '" + r.sample_id + "' at record " + std::to_string(i));
        }
        for (std::size_t j = 0; j < r.vector.size(); ++j) {
            if (!std::isfinite(r.vector[j])) {
                throw StoreError("non-finite value in record " + std::to_string(i) + " ('" + r.sample_id +
                                 "') at coordinate " + std::to_string(j));
            }
        }
    }
}

}  // namespace

std::vector<double> average_pool(std::span<const double> frames, std::size_t dim) {
    if (dim == 0 || frames.size() % dim != 0) throw StoreError("frame matrix size is not a multiple of the dimension");
    const std::size_t n = frames.size() / dim;
    if (n == 0) throw StoreError("cannot pool zero frames");
    std::vector<double> mean(dim, 0.0);
    for (std::size_t f = 0; f < n; ++f)
        for (std::size_t j = 0; j < dim; ++j) mean[j] += frames[f * dim + j];
    for (auto& m : mean) m /= static_cast<double>(n);
    return mean;
}

std::vector<std::uint8_t> encode_store(const EmbeddingStore& store) {
    validate(store);
    Writer w;
    w.put_bytes(std::string_view(EmbeddingStore::kMagic, 4));
    w.put<std::uint16_t>(EmbeddingStore::kVersion);
    w.put<std::uint32_t>(store.dim);
    w.put<std::uint64_t>(store.records.size());
    for (const auto& r : store.records) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(r.sample_id.size()));
        w.put_bytes(r.sample_id);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(r.transcript.size()));
        w.put_bytes(r.transcript);
        for (float v : r.vector) w.put<float>(v);
    }
    return w.take();
}

EmbeddingStore decode_store(std::span<const std::uint8_t> bytes) {
    Reader rd(bytes);
    const auto magic = rd.get_string(4, "magic");
    if (magic != std::string_view(EmbeddingStore::kMagic, 4)) throw StoreError("bad magic: not an ALKD store");
    const auto version = rd.get<std::uint16_t>("version");
    if (version != EmbeddingStore::kVersion) {
        throw StoreError("unsupported ALKD version " + std::to_string(version));
    }
    EmbeddingStore store;
    store.dim = rd.get<std::uint32_t>("dimension");
    const auto count = rd.get<std::uint64_t>("record count");
    for (std::uint64_t i = 0; i < count; ++i) {
        TeacherEmbedding r;
        const auto id_len = rd.get<std::uint16_t>("id length");
        r.sample_id = rd.get_string(id_len, "sample id");
        const auto text_len = rd.get<std::uint32_t>("transcript length");
        r.transcript = rd.get_string(text_len, "transcript");
        r.vector.resize(store.dim);
        for (auto& v : r.vector) v = rd.get<float>("vector");
        store.records.push_back(std::move(r));
    }
    if (rd.remaining() != 0) {
        throw StoreError("store declares " + std::to_string(count) + " records but has " +
                         std::to_string(rd.remaining()) + " trailing bytes at offset " + std::to_string(rd.offset()));
    }
    validate(store);
    return store;
}

void write_store(const EmbeddingStore& store, const std::string& path) {
    const auto bytes = encode_store(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw StoreError("write failed for " + path);
}

EmbeddingStore read_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StoreError("cannot open store " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_store(bytes);
}

std::vector<double> class_anchor(std::uint32_t latent_class, std::size_t dim) {
    if (dim < 2) throw StoreError("teacher dimension must be at least 2");
    auto draw = [dim](std::uint32_t id) {
        Rng rng(derive_seed(0x414c4b44, kStreamAnchor, id));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> v(dim);
        for (auto& x : v) x = normal(rng);
        return v;
    };
    auto normalize = [](std::vector<double>& v) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
    };
    if (latent_class >= dim) {
        auto v = draw(latent_class);
        normalize(v);
        return v;
    }
    // Gram-Schmidt over classes 0..latent_class: anchors of the first `dim`
    // classes are mutually orthogonal.
    std::vector<std::vector<double>> basis;
    for (std::uint32_t c = 0; c <= latent_class; ++c) {
        auto v = draw(c);
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t j = 0; j < dim; ++j) dot += v[j] * b[j];
            for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * b[j];
        }
        normalize(v);
        basis.push_back(std::move(v));
    }
    return basis.back();
}

std::vector<float> synth_teacher(std::uint32_t latent_class, std::size_t dim, double noise_scale, Rng& rng) {
    const auto anchor = class_anchor(latent_class, dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> out(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        const double noise = noise_scale > 0.0 ? noise_scale * normal(rng) : 0.0;
        out[j] = static_cast<float>(anchor[j] + noise);
    }
    return out;
}

}  // namespace alkd
