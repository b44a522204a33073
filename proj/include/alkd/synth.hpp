#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alkd/teacher_store.hpp"
#include "alkd/text.hpp"

namespace alkd {

/// Synthetic paired corpus: templated transcripts whose word choice leans on
/// a latent class, and teacher vectors drawn around that class's anchor.
struct SynthOptions {
    std::size_t classes = 4;
    std::size_t per_class = 16;
    std::size_t dim = 32;
    double noise = 0.1;
    std::uint64_t seed = 0;
    /// Per-word probability of drawing from the sample's own class words.
    double class_word_rate = 0.25;
    /// Per-word probability of drawing a class word of a random class.
    double distractor_rate = 0.15;
    std::size_t min_words = 6;
    std::size_t max_words = 10;
};

/// Sentence for `latent_class`; filler words otherwise.
std::string synth_transcript(std::size_t latent_class, const SynthOptions& options, Rng& rng);

/// Store of classes × per_class records, classes interleaved, plus the
/// matching labelled records (label = class id).
struct SynthCorpus {
    EmbeddingStore store;
    std::vector<Record> records;
};

SynthCorpus synth_corpus(const SynthOptions& options);

/// Labelled transcripts only, from an independent stream (`split` selects it)
/// so held-out sets never repeat the pretraining draws.
std::vector<Record> synth_records(const SynthOptions& options, std::size_t per_class, std::uint64_t split);

}  // namespace alkd
