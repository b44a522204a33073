#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <limits>

#include "alkd/teacher_store.hpp"
#include "../support/random.hpp"

using namespace alkd;

namespace {

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

EmbeddingStore random_store(std::size_t n, std::uint32_t dim, std::uint64_t seed) {
    Rng rng(seed);
    EmbeddingStore s;
    s.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        TeacherEmbedding e{"id" + std::to_string(i), "text number " + std::to_string(i), {}};
        for (double v : testing_util::randv(dim, rng)) e.vector.push_back(static_cast<float>(v));
        s.records.push_back(std::move(e));
    }
    return s;
}

}  // namespace

TEST_CASE("average_pool") {
    CHECK(average_pool(std::vector<double>{1, 2, 3}, 3) == std::vector<double>{1, 2, 3});
    CHECK(average_pool(std::vector<double>{1, 0, 0, 1}, 2) == std::vector<double>{0.5, 0.5});
    CHECK_THROWS(average_pool(std::vector<double>{}, 2));
    Rng rng(2);
    const auto frames = testing_util::randv(1500 * 8, rng);
    const auto pooled = average_pool(frames, 8);
    for (std::size_t j = 0; j < 8; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < 1500; ++i) s += frames[i * 8 + j];
        CHECK(std::abs(pooled[j] - s / 1500) < 1e-6);
    }
}

TEST_CASE("average_pool is permutation invariant and linear") {
    Rng rng(4);
    auto a = testing_util::randv(10 * 3, rng), b = testing_util::randv(10 * 3, rng);
    auto pa = average_pool(a, 3), pb = average_pool(b, 3);
    std::vector<double> rev(a.size()), lin(a.size());
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 3; ++j) rev[(9 - i) * 3 + j] = a[i * 3 + j];
    for (std::size_t i = 0; i < a.size(); ++i) lin[i] = 2.0 * a[i] - b[i];
    auto pr = average_pool(rev, 3), pl = average_pool(lin, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(pr[j] == doctest::Approx(pa[j]).epsilon(1e-12));
        CHECK(pl[j] == doctest::Approx(2.0 * pa[j] - pb[j]).epsilon(1e-12));
    }
}

TEST_CASE("store round trips") {
    EmbeddingStore empty;
    empty.dim = 4;
    write_store(empty, tmp("empty.alkd"));
    CHECK(std::filesystem::file_size(tmp("empty.alkd")) == 4 + 2 + 4 + 8);
    CHECK(read_store(tmp("empty.alkd")).count() == 0);

    EmbeddingStore one;
    one.dim = 2;
    one.records.push_back({"only", "hi", {1.0f, -1.0f}});
    write_store(one, tmp("one.alkd"));
    CHECK(read_store(tmp("one.alkd")) == one);

    const auto big = random_store(1000, 16, 9);
    const auto bytes = encode_store(big);
    const auto back = decode_store(bytes);
    CHECK(back == big);
    CHECK(encode_store(back) == bytes);
}

TEST_CASE("store validation errors") {
    auto s = random_store(3, 4, 1);
    s.records[1].vector.pop_back();
    CHECK_THROWS_AS(encode_store(s), StoreError);

    auto dup = random_store(3, 4, 1);
    dup.records[2].sample_id = dup.records[0].sample_id;
    CHECK_THROWS_AS(encode_store(dup), StoreError);

    auto nan = random_store(10, 4, 1);
    nan.records[7].vector[2] = std::numeric_limits<float>::quiet_NaN();
    try {
        encode_store(nan);
        FAIL("expected StoreError");
    } catch (const StoreError& e) {
        CHECK(std::string(e.what()).find("record 7") != std::string::npos);
    }
}

TEST_CASE("reader rejects corrupt files") {
    const auto good = encode_store(random_store(10, 4, 1));

    auto truncated = good;
    truncated.resize(good.size() - 5);
    try {
        decode_store(truncated);
        FAIL("expected StoreError");
    } catch (const StoreError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }

    auto magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_store(magic), StoreError);

    auto version = good;
    version[4] = 9;
    CHECK_THROWS_AS(decode_store(version), StoreError);

    // A NaN injected into record 7's bytes is reported by index.
    auto s = random_store(10, 4, 1);
    auto bytes = encode_store(s);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::size_t pos = 18;
    for (std::size_t r = 0; r < 7; ++r) {
        pos += 2 + s.records[r].sample_id.size() + 4 + s.records[r].transcript.size() + 16;
    }
    pos += 2 + s.records[7].sample_id.size() + 4 + s.records[7].transcript.size();
    std::memcpy(bytes.data() + pos, &nan, 4);
    try {
        decode_store(bytes);
        FAIL("expected StoreError");
    } catch (const StoreError& e) {
        CHECK(std::string(e.what()).find("record 7") != std::string::npos);
    }

    // Declared count larger or smaller than the payload.
    auto more = good;
    more[10] += 1;
    CHECK_THROWS_AS(decode_store(more), StoreError);
    auto fewer = good;
    fewer[10] -= 1;
    CHECK_THROWS_AS(decode_store(fewer), StoreError);
}

TEST_CASE("synth_teacher anchors") {
    Rng rng(1);
    const auto a = synth_teacher(3, 16, 0.0, rng);
    const auto anchor = class_anchor(3, 16);
    double norm = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(a[i] == static_cast<float>(anchor[i]));
        norm += anchor[i] * anchor[i];
    }
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t dim : {8u, 16u, 32u}) {
        const auto x = class_anchor(0, dim), y = class_anchor(1, dim);
        double c = 0.0;
        for (std::size_t i = 0; i < dim; ++i) c += x[i] * y[i];
        CHECK(std::abs(c) < 0.5);
    }
    Rng r1(5), r2(5);
    CHECK(synth_teacher(2, 8, 0.3, r1) == synth_teacher(2, 8, 0.3, r2));
}
