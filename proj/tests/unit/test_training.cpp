#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "alkd/training.hpp"
#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace alkd;
using testing_util::tiny_run;

namespace {

std::vector<std::uint8_t> run_bytes(const EmbeddingStore& store, const testing_util::TinyRun& r) {
    Pretrainer p(store, r.vocab, r.train, r.model);
    while (!p.done()) p.step();
    return encode_checkpoint(p.checkpoint());
}

}  // namespace

TEST_CASE("lr schedule") {
    CHECK(lr_at(0, 1e-4, 10, 100) == 0.0);
    CHECK(lr_at(5, 1e-4, 10, 100) == doctest::Approx(5e-5).epsilon(1e-15));
    CHECK(lr_at(10, 1e-4, 10, 100) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(lr_at(55, 1e-4, 10, 100) == doctest::Approx(5e-5).epsilon(1e-15));
    CHECK(lr_at(100, 1e-4, 10, 100) == 0.0);
    CHECK(lr_at(150, 1e-4, 10, 100) == 0.0);
    CHECK(lr_at(3, 1e-4, 0, 10) == doctest::Approx(7e-5).epsilon(1e-15));
}

TEST_CASE("adamw matches the scalar recurrence") {
    NumericsScope scope(oracle::f64());
    Tensor w = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
    Tensor b = Tensor::from({1}, {0.3}, true);
    std::vector<NamedParameter> params{{"w", w, true}, {"b", b, false}};
    auto state = OptimizerState::for_parameters(params);
    std::vector<oracle::AdamScalar> ow{{0.5}, {-1.0}, {2.0}};
    oracle::AdamScalar ob{0.3};
    const double grads[3][4] = {{0.1, -0.2, 0.3, 1.0}, {-0.5, 0.0, 0.2, -1.0}, {2.0, 0.01, -0.3, 0.5}};
    for (int s = 0; s < 3; ++s) {
        for (int i = 0; i < 3; ++i) w.grad()[i] = grads[s][i];
        b.grad()[0] = grads[s][3];
        adamw_step(params, state, 1e-2, 0.1);
        for (int i = 0; i < 3; ++i) {
            ow[i].step(grads[s][i], 1e-2, 0.1);
            CHECK(std::abs(w.data()[i] - ow[i].p) <= 1e-9);
        }
        ob.step(grads[s][3], 1e-2, 0.1, false);
        CHECK(std::abs(b.data()[0] - ob.p) <= 1e-9);
    }
    CHECK(state.step == 3);
}

TEST_CASE("zero gradient leaves only weight decay") {
    NumericsScope scope(oracle::f64());
    Tensor w = Tensor::from({2}, {1.0, -2.0}, true);
    Tensor g = Tensor::from({1}, {1.0}, true);
    std::vector<NamedParameter> params{{"w", w, true}, {"gain", g, false}};
    auto state = OptimizerState::for_parameters(params);
    w.zero_grad();
    g.zero_grad();
    for (int s = 0; s < 5; ++s) adamw_step(params, state, 0.1, 0.01);
    CHECK(w.data()[0] == doctest::Approx(std::pow(1.0 - 0.001, 5)).epsilon(1e-14));
    CHECK(w.data()[1] == doctest::Approx(-2.0 * std::pow(1.0 - 0.001, 5)).epsilon(1e-14));
    CHECK(g.data()[0] == 1.0);
}

TEST_CASE("first adam step moves by lr times the sign") {
    NumericsScope scope(oracle::f64());
    Tensor w = Tensor::from({3}, {0.0, 0.0, 0.0}, true);
    std::vector<NamedParameter> params{{"w", w, false}};
    auto state = OptimizerState::for_parameters(params);
    w.grad()[0] = 3.0;
    w.grad()[1] = -0.001;
    w.grad()[2] = 1e6;
    adamw_step(params, state, 0.01, 0.0);
    CHECK(w.data()[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(w.data()[1] == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(w.data()[2] == doctest::Approx(-0.01).epsilon(1e-6));
    w.grad()[0] = NAN;
    CHECK_THROWS_AS(adamw_step(params, state, 0.01, 0.0), NumericError);
}

TEST_CASE("gradient clipping") {
    Tensor w = Tensor::from({2}, {0, 0}, true);
    std::vector<NamedParameter> params{{"w", w, true}};
    w.grad()[0] = 3.0;
    w.grad()[1] = 4.0;
    CHECK(clip_grad_norm(params, 1.0) == 5.0);
    CHECK(w.grad()[0] == doctest::Approx(0.6));
    CHECK(w.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("config validation") {
    auto r = tiny_run();
    r.train.warmup_steps = 1000;
    CHECK_THROWS_AS(Pretrainer(r.corpus.store, r.vocab, r.train, r.model), ConfigError);
    r = tiny_run();
    r.model.teacher_dim = 9;
    CHECK_THROWS_AS(Pretrainer(r.corpus.store, r.vocab, r.train, r.model), ConfigError);
    r.train.kd_objective = KdObjective::none;
    CHECK_NOTHROW(Pretrainer(r.corpus.store, r.vocab, r.train, r.model));
    CHECK_THROWS_AS(parse_kd_objective("mse"), ConfigError);
    r = tiny_run();
    EmbeddingStore empty;
    empty.dim = 8;
    CHECK_THROWS_AS(Pretrainer(empty, r.vocab, r.train, r.model), DataError);
    CHECK(r.train.total_steps(16) == 8);
    CHECK(r.train.total_steps(17) == 10);
}

TEST_CASE("training is deterministic for a seed") {
    auto r = tiny_run();
    const auto a = run_bytes(r.corpus.store, r);
    CHECK(a == run_bytes(r.corpus.store, r));
    r.train.seed = 1;
    CHECK(a != run_bytes(r.corpus.store, r));
}

TEST_CASE("resuming replays the same run") {
    auto r = tiny_run();
    r.train.epochs = 3;
    const auto straight = run_bytes(r.corpus.store, r);
    Pretrainer first(r.corpus.store, r.vocab, r.train, r.model);
    for (int i = 0; i < 5; ++i) first.step();
    const auto saved = decode_checkpoint(encode_checkpoint(first.checkpoint()));
    Pretrainer second(r.corpus.store, saved, r.train);
    CHECK(second.current_step() == 5);
    while (!second.done()) second.step();
    CHECK(encode_checkpoint(second.checkpoint()) == straight);
}

TEST_CASE("without distillation the teacher vectors are irrelevant") {
    auto r = tiny_run();
    EmbeddingStore other = r.corpus.store;
    for (auto& e : other.records)
        for (auto& v : e.vector) v = -3.0f * v + 1.0f;
    r.train.kd_objective = KdObjective::none;
    CHECK(run_bytes(r.corpus.store, r) == run_bytes(other, r));
    r.train.kd_objective = KdObjective::crd;
    r.train.gamma = 0.0;
    CHECK(run_bytes(r.corpus.store, r) == run_bytes(other, r));
    r.train.gamma = 1.0;
    CHECK(run_bytes(r.corpus.store, r) != run_bytes(other, r));
}

TEST_CASE("the teacher store is never modified") {
    auto r = tiny_run();
    const auto before = encode_store(r.corpus.store);
    for (auto obj : {KdObjective::nst, KdObjective::crd}) {
        r.train.kd_objective = obj;
        run_bytes(r.corpus.store, r);
        CHECK(encode_store(r.corpus.store) == before);
    }
}

TEST_CASE("training lowers the loss on a tiny corpus") {
    // full batch with fixed masks: a deterministic objective to memorize
    auto r = tiny_run(4);
    r.model.dropout_rate = 0.0;
    r.train.lr_peak = 3e-3;
    r.train.batch_size = 16;
    r.train.remask_each_epoch = false;
    r.train.epochs = 150;
    r.train.warmup_steps = 5;
    for (auto obj : {KdObjective::nst, KdObjective::crd}) {
        r.train.kd_objective = obj;
        Pretrainer p(r.corpus.store, r.vocab, r.train, r.model);
        std::vector<std::size_t> all(r.corpus.store.count());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        const double before = p.evaluate_batch(all, 0).total;
        while (!p.done()) p.step();
        const double after = p.evaluate_batch(all, 0).total;
        INFO(to_string(obj) << " " << before << " -> " << after);
        CHECK(after < 0.5 * before);
    }
}

TEST_CASE("metrics log and checkpoints on disk") {
    auto r = tiny_run();
    r.train.checkpoint_every = 4;
    const auto dir = std::filesystem::temp_directory_path() / "alkd_train_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    PretrainOutputs out{dir.string(), (dir / "metrics.jsonl").string(), {}};
    const auto result = pretrain(r.corpus.store, r.vocab, r.train, r.model, out);
    CHECK(result.history.size() == 8);
    CHECK(std::filesystem::exists(dir / "step_4.alkc"));
    CHECK(std::filesystem::exists(dir / "final.alkc"));
    std::ifstream log(dir / "metrics.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("step").get<int>() == static_cast<int>(++n));
        CHECK(j.at("tokens_per_s").is_null());
        CHECK(j.contains("mlm"));
        CHECK(j.contains("kd"));
        CHECK(j.contains("total"));
        CHECK(j.contains("lr"));
    }
    CHECK(n == 8);
    const auto final_ckpt = load_checkpoint((dir / "final.alkc").string());
    CHECK(final_ckpt.step == 8);
    CHECK(encode_checkpoint(final_ckpt) == encode_checkpoint(result.final_checkpoint));
}
