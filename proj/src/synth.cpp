#include "alkd/synth.hpp"

#include <array>
#include <cstdio>

namespace alkd {
namespace {

constexpr std::array<const char*, 24> kFiller = {
    "the",   "a",    "it",   "was",  "and",   "very",  "so",     "this",  "that", "really", "just",  "quite",
    "movie", "film", "plot", "time", "scene", "story", "people", "thing", "made", "felt",   "about", "then"};

// Class word sets; classes beyond the list reuse it with a numeric suffix.
constexpr std::array<std::array<const char*, 6>, 8> kClassWords = {{
    {"great", "loved", "wonderful", "bright", "happy", "fun"},
    {"awful", "boring", "hated", "dull", "weak", "sad"},
    {"strange", "odd", "sudden", "shocking", "weird", "twist"},
    {"angry", "loud", "furious", "harsh", "rude", "bitter"},
    {"calm", "quiet", "gentle", "slow", "soft", "still"},
    {"scary", "dark", "tense", "creepy", "grim", "cold"},
    {"funny", "silly", "goofy", "witty", "jokes", "laughs"},
    {"long", "epic", "grand", "huge", "vast", "deep"},
}};

std::string class_word(std::size_t cls, std::size_t k) {
    std::string w = kClassWords[cls % kClassWords.size()][k];
    if (cls >= kClassWords.size()) w += std::to_string(cls / kClassWords.size());
    return w;
}

std::string sample_id(std::uint64_t split, std::size_t index) {
    char buf[48];
    if (split == 0) {
        std::snprintf(buf, sizeof buf, "synth-%06zu", index);
    } else {
        std::snprintf(buf, sizeof buf, "synth%llu-%06zu", static_cast<unsigned long long>(split), index);
    }
    return buf;
}

void check(const SynthOptions& o) {
    if (o.classes == 0) throw std::invalid_argument("synth: classes must be positive");
    if (o.dim < 2) throw std::invalid_argument("synth: dim must be at least 2");
    if (o.min_words == 0 || o.max_words < o.min_words) throw std::invalid_argument("synth: bad sentence length range");
    if (o.class_word_rate < 0.0 || o.distractor_rate < 0.0 || o.class_word_rate + o.distractor_rate > 1.0) {
        throw std::invalid_argument("synth: word rates must be non-negative and sum to at most 1");
    }
    if (!(o.noise >= 0.0)) throw std::invalid_argument("synth: noise must be non-negative");
}

}  // namespace

std::string synth_transcript(std::size_t latent_class, const SynthOptions& options, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n = options.min_words + rng() % (options.max_words - options.min_words + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = unit(rng);
        std::string w;
        if (u < options.class_word_rate) {
            w = class_word(latent_class, rng() % 6);
        } else if (u < options.class_word_rate + options.distractor_rate) {
            w = class_word(rng() % options.classes, rng() % 6);
        } else {
            w = kFiller[rng() % kFiller.size()];
        }
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

SynthCorpus synth_corpus(const SynthOptions& options) {
    check(options);
    SynthCorpus corpus;
    corpus.store.dim = static_cast<std::uint32_t>(options.dim);
    const std::size_t total = options.classes * options.per_class;
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t cls = i % options.classes;
        Rng rng(derive_seed(options.seed, kStreamSynth, i));
        TeacherEmbedding e;
        e.sample_id = sample_id(0, i);
        e.transcript = synth_transcript(cls, options, rng);
        e.vector = synth_teacher(static_cast<std::uint32_t>(cls), options.dim, options.noise, rng);
        corpus.records.push_back({e.sample_id, e.transcript, static_cast<double>(cls), {}});
        corpus.store.records.push_back(std::move(e));
    }
    return corpus;
}

std::vector<Record> synth_records(const SynthOptions& options, std::size_t per_class, std::uint64_t split) {
    check(options);
    if (split == 0) throw std::invalid_argument("synth_records: split 0 is the pretraining stream");
    std::vector<Record> out;
    const std::uint64_t base = derive_seed(options.seed, kStreamSynth + 16 * split);
    for (std::size_t i = 0; i < options.classes * per_class; ++i) {
        const std::size_t cls = i % options.classes;
        Rng rng(derive_seed(base, kStreamSynth, i));
        out.push_back({sample_id(split, i), synth_transcript(cls, options, rng), static_cast<double>(cls), {}});
    }
    return out;
}

}  // namespace alkd
