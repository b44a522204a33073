#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "alkd/cli.hpp"
#include "alkd/teacher_store.hpp"

using namespace alkd;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "alkd");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"inspect-store", "--bogus"}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
    const auto help = run({"pretrain", "--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("gamma") != std::string::npos);
    CHECK(help.out.find("tau") != std::string::npos);
    CHECK(help.out.find("lr_peak") != std::string::npos);
}

TEST_CASE("synth-teacher and inspect-store") {
    const auto d = fresh_dir("alkd_cli_synth");
    const auto store = (d / "s.alkd").string();
    auto r = run({"synth-teacher", "--classes", "4", "--per-class", "16", "--dim", "32", "--seed", "7", "--out", store});
    REQUIRE(r.code == kExitOk);
    const auto s = read_store(store);
    CHECK(s.count() == 64);
    CHECK(s.dim == 32);
    r = run({"inspect-store", "--path", store, "--limit", "3"});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("dim: 32") != std::string::npos);
    CHECK(r.out.find("count: 64") != std::string::npos);
    CHECK(r.out.find(s.records[0].sample_id) != std::string::npos);

    // corrupt file is a data error
    std::ofstream(d / "bad.alkd", std::ios::binary) << "ALKDxx";
    CHECK(run({"inspect-store", "--path", (d / "bad.alkd").string()}).code == kExitData);
}

TEST_CASE("pretrain with overrides, evaluate, determinism") {
    const auto d = fresh_dir("alkd_cli_pretrain");
    const auto store = (d / "s.alkd").string();
    REQUIRE(run({"synth-teacher", "--per-class", "4", "--dim", "8", "--out", store, "--dataset-out",
                 (d / "train.jsonl").string()})
                .code == kExitOk);
    const std::vector<std::string> base{"pretrain", "--store", store, "--vocab-size", "60",
                                        "--set", "d_model=16", "--set", "n_heads=2", "--set", "d_ff=32",
                                        "--set", "epochs=1", "--set", "warmup_steps=1", "--set", "batch_size=8",
                                        "--seed", "3", "--threads", "1"};
    auto a = base;
    a.insert(a.end(), {"--out-dir", (d / "a").string()});
    auto b = base;
    b.insert(b.end(), {"--out-dir", (d / "b").string()});
    REQUIRE(run(a).code == kExitOk);
    REQUIRE(run(b).code == kExitOk);
    for (const char* f : {"final.alkc", "metrics.jsonl", "vocab.txt"}) {
        CHECK(fs::exists(d / "a" / f));
        CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
    }

    auto bad = base;
    bad.insert(bad.end(), {"--out-dir", (d / "c").string(), "--set", "gama=0"});
    const auto r = run(bad);
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("gama") != std::string::npos);

    auto baseline = base;
    baseline.insert(baseline.end(), {"--out-dir", (d / "g0").string(), "--set", "gamma=0"});
    CHECK(run(baseline).code == kExitOk);
    CHECK(slurp(d / "g0" / "final.alkc") != slurp(d / "a" / "final.alkc"));

    const std::vector<std::string> ev{"evaluate", "--checkpoint", (d / "a" / "final.alkc").string(), "--train",
                                      (d / "train.jsonl").string(), "--test", (d / "train.jsonl").string(),
                                      "--set", "finetune.task=sentiment_class_2", "--set", "finetune.seeds=2",
                                      "--set", "finetune.epochs=1", "--seed", "0"};
    auto e1 = ev, e2 = ev;
    e1.insert(e1.end(), {"--out", (d / "r1.json").string()});
    e2.insert(e2.end(), {"--out", (d / "r2.json").string()});
    REQUIRE(run(e1).code == kExitOk);
    REQUIRE(run(e2).code == kExitOk);
    CHECK(slurp(d / "r1.json") == slurp(d / "r2.json"));
    CHECK(slurp(d / "r1.json").find("accuracy_2") != std::string::npos);

    const std::vector<std::string> ft{"finetune", "--checkpoint", (d / "a" / "final.alkc").string(), "--train",
                                      (d / "train.jsonl").string(), "--set", "finetune.task=sentiment_class_2",
                                      "--set", "finetune.epochs=1", "--out", (d / "ft.alkc").string()};
    REQUIRE(run(ft).code == kExitOk);
    CHECK(run({"evaluate", "--checkpoint", (d / "ft.alkc").string(), "--test", (d / "train.jsonl").string(), "--out",
               (d / "r3.json").string()})
              .code == kExitOk);
}

TEST_CASE("build-vocab from a store") {
    const auto d = fresh_dir("alkd_cli_vocab");
    const auto store = (d / "s.alkd").string();
    REQUIRE(run({"synth-teacher", "--per-class", "4", "--dim", "8", "--out", store}).code == kExitOk);
    CHECK(run({"build-vocab", "--corpus", store, "--size", "40", "--out", (d / "v.txt").string()}).code == kExitOk);
    std::ifstream in(d / "v.txt");
    std::string first;
    std::getline(in, first);
    CHECK(first == "[PAD]");
}
