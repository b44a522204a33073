#pragma once

#include "alkd/synth.hpp"
#include "alkd/training.hpp"

namespace testing_util {

struct TinyRun {
    alkd::SynthCorpus corpus;
    alkd::Vocab vocab;
    alkd::ModelConfig model;
    alkd::TrainConfig train;
};

/// Small synthetic corpus and a student that trains in well under a second.
inline TinyRun tiny_run(std::size_t per_class = 4, std::uint64_t seed = 0) {
    TinyRun r;
    alkd::SynthOptions o;
    o.per_class = per_class;
    o.dim = 8;
    o.seed = seed;
    r.corpus = alkd::synth_corpus(o);
    std::vector<std::string> texts;
    for (const auto& e : r.corpus.store.records) texts.push_back(e.transcript);
    r.vocab = alkd::induce_vocab(texts, 80);
    r.model.n_layers = 1;
    r.model.d_model = 16;
    r.model.n_heads = 2;
    r.model.d_ff = 32;
    r.model.max_len = 16;
    r.model.teacher_dim = 8;
    r.train.batch_size = 4;
    r.train.epochs = 2;
    r.train.warmup_steps = 2;
    r.train.lr_peak = 1e-3;
    return r;
}

}  // namespace testing_util
