#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "alkd/config.hpp"

using namespace alkd;

namespace {

std::string write_tmp(const std::string& name, const std::string& text) {
    const auto p = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("settings by name") {
    RunConfig run;
    apply_setting(run, "gamma", "0");
    apply_setting(run, "train.tau", "0.5");
    apply_setting(run, "model.d_model", "32");
    apply_setting(run, "kd_objective", "crd");
    apply_setting(run, "finetune.task", "sentiment_class_3");
    apply_setting(run, "remask_each_epoch", "false");
    apply_setting(run, "kernel_degree", "3");
    CHECK(run.train.gamma == 0.0);
    CHECK(run.train.tau == 0.5);
    CHECK(run.model.d_model == 32);
    CHECK(run.train.kd_objective == KdObjective::crd);
    CHECK(run.finetune.task == "sentiment_class_3");
    CHECK_FALSE(run.train.remask_each_epoch);
    CHECK(run.train.kernel.degree == 3);
    CHECK_THROWS_AS(apply_setting(run, "gama", "1"), ConfigError);
    CHECK_THROWS_AS(apply_setting(run, "gamma", "abc"), ConfigError);
    CHECK_THROWS_AS(apply_setting(run, "d_model", "-3"), ConfigError);
    CHECK(split_override("a=b=c") == std::pair<std::string, std::string>{"a", "b=c"});
    CHECK_THROWS_AS(split_override("novalue"), ConfigError);
}

TEST_CASE("toml-style and json config files") {
    const auto toml = write_tmp("alkd_cfg.toml", R"(# desk run
[model]
d_model = 32
n_heads = 4

[train]
kd_objective = "nst"
gamma = 0.5   # half weight
lr_peak = 1e-3

[finetune]
task = "emotion_binary"
)");
    const auto run = load_config(toml);
    CHECK(run.model.d_model == 32);
    CHECK(run.train.gamma == 0.5);
    CHECK(run.train.lr_peak == 1e-3);
    CHECK(run.finetune.task == "emotion_binary");

    const auto json = write_tmp("alkd_cfg.json", R"({"model": {"d_model": 48}, "train": {"tau": 0.02}, "seed": 4})");
    const auto j = load_config(json);
    CHECK(j.model.d_model == 48);
    CHECK(j.train.tau == 0.02);
    CHECK(j.train.seed == 4);

    const auto bad = write_tmp("alkd_cfg_bad.toml", "unknown_key = 1\n");
    CHECK_THROWS_AS(load_config(bad), ConfigError);
}

TEST_CASE("config json and key listing") {
    RunConfig run;
    const auto j = config_json(run);
    CHECK(j.at("train").at("gamma").get<double>() == 1.0);
    CHECK(j.at("train").at("tau").get<double>() == 0.01);
    CHECK(j.at("finetune").at("lr").get<double>() == 2e-5);
    const auto text = describe_keys(run, {"model", "train", "finetune"});
    for (const auto& k : config_keys(run)) CHECK(text.find(k.name) != std::string::npos);
    CHECK(text.find("gamma") != std::string::npos);
    CHECK(text.find("published: 1") != std::string::npos);
    CHECK(text.find("published: 0.01") != std::string::npos);
    CHECK(text.find("published: 1e-4") != std::string::npos);
}
