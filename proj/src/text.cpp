#include "alkd/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <set>

namespace alkd {
namespace {

const std::vector<std::string>& reserved_tokens() {
    static const std::vector<std::string> tokens{"[PAD]", "[UNK]", "[CLS]", "[MASK]"};
    return tokens;
}

bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

/// Byte length of the UTF-8 code point starting at s[i].
std::size_t code_point_length(std::string_view s, std::size_t i) {
    std::size_t n = 1;
    while (i + n < s.size() && is_utf8_continuation(static_cast<unsigned char>(s[i + n]))) ++n;
    return n;
}

struct Candidate {
    std::string token;
    std::size_t count = 0;
    std::size_t first_seen = 0;
};

/// Sorts by descending count, then first appearance.
void rank(std::vector<Candidate>& cands) {
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.first_seen < b.first_seen;
    });
}

}  // namespace

Vocab::Vocab() : Vocab(reserved_tokens()) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < kNumReserved || !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens_.begin())) {
        throw DataError("vocabulary must start with [PAD], [UNK], [CLS], [MASK]");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
            throw DataError("duplicate vocabulary token '" + tokens_[i] + "' at line " + std::to_string(i + 1));
        }
    }
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary file " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c)) {
            flush();
            words.emplace_back(1, ch);
        } else {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        }
    }
    flush();
    return words;
}

Vocab induce_vocab(const std::vector<std::string>& corpus, std::size_t target_size) {
    if (target_size <= kNumReserved) throw DataError("vocabulary size must exceed the 4 reserved tokens");
    std::unordered_map<std::string, std::size_t> word_index;
    std::vector<Candidate> words;
    std::unordered_map<std::string, std::size_t> piece_index;
    std::vector<Candidate> pieces;
    std::size_t order = 0;
    auto bump = [&](std::unordered_map<std::string, std::size_t>& index, std::vector<Candidate>& list,
                    const std::string& tok) {
        auto [it, inserted] = index.emplace(tok, list.size());
        if (inserted) list.push_back({tok, 0, order});
        ++list[it->second].count;
        ++order;
    };
    for (const auto& line : corpus) {
        for (const auto& w : split_words(line)) {
            bump(word_index, words, w);
            for (std::size_t i = 0; i < w.size();) {
                const std::size_t n = code_point_length(w, i);
                const std::string ch = w.substr(i, n);
                bump(piece_index, pieces, i == 0 ? ch : std::string(kContinuation) + ch);
                i += n;
            }
        }
    }
    if (words.empty()) throw DataError("cannot induce a vocabulary from an empty corpus");
    rank(words);
    rank(pieces);

    std::vector<std::string> tokens = reserved_tokens();
    std::set<std::string> taken(tokens.begin(), tokens.end());
    auto take = [&](const std::vector<Candidate>& list) {
        for (const auto& c : list) {
            if (tokens.size() >= target_size) return;
            if (taken.insert(c.token).second) tokens.push_back(c.token);
        }
    };
    take(words);
    take(pieces);
    return Vocab(std::move(tokens));
}

TokenizedSample tokenize(std::string id, std::string_view text, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 2) throw DataError("max_len must be at least 2");
    TokenizedSample out{std::move(id), {kClsId}, std::string(text)};
    const auto words = split_words(text);
    if (words.empty()) throw DataError("sample '" + out.id + "' has no tokens");
    std::vector<TokenId> pieces;
    for (const auto& w : words) {
        pieces.clear();
        bool ok = true;
        std::size_t start = 0;
        while (start < w.size()) {
            std::optional<TokenId> match;
            std::size_t end = w.size();
            while (end > start) {
                const std::string piece = start == 0 ? w.substr(0, end) : std::string(kContinuation) + w.substr(start, end - start);
                if ((match = vocab.find(piece))) break;
                // step back one code point
                do {
                    --end;
                } while (end > start && is_utf8_continuation(static_cast<unsigned char>(w[end])));
            }
            if (!match) {
                ok = false;
                break;
            }
            pieces.push_back(*match);
            start = end;
        }
        if (!ok) {
            pieces.assign(1, kUnkId);
        }
        out.token_ids.insert(out.token_ids.end(), pieces.begin(), pieces.end());
        if (out.token_ids.size() >= max_len) break;
    }
    if (out.token_ids.size() > max_len) out.token_ids.resize(max_len);
    return out;
}

MaskedSample mask_tokens(const TokenizedSample& sample, const MaskingOptions& options, std::size_t vocab_size,
                         Rng& rng) {
    if (!(options.rate >= 0.0 && options.rate <= 1.0)) throw DataError("masking rate must be in [0, 1]");
    MaskedSample out{sample.id, sample.token_ids, sample.token_ids, {}};
    std::bernoulli_distribution select(options.rate);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < sample.token_ids.size(); ++i) {
        const TokenId t = sample.token_ids[i];
        if (t == kClsId || t == kPadId) continue;
        if (!select(rng)) continue;
        out.mask_positions.push_back(i);
        if (!options.bert_split) {
            out.input_ids[i] = kMaskId;
            continue;
        }
        const double u = unit(rng);
        if (u < 0.8) {
            out.input_ids[i] = kMaskId;
        } else if (u < 0.9 && vocab_size > kNumReserved) {
            std::uniform_int_distribution<TokenId> any(static_cast<TokenId>(kNumReserved),
                                                       static_cast<TokenId>(vocab_size - 1));
            out.input_ids[i] = any(rng);
        }
    }
    return out;
}

MaskedSample mask_tokens(const TokenizedSample& sample, double rate, Rng& rng) {
    return mask_tokens(sample, MaskingOptions{rate, false}, 0, rng);
}

MaskedSample unmasked(const TokenizedSample& sample) {
    return MaskedSample{sample.id, sample.token_ids, sample.token_ids, {}};
}

std::size_t Batch::valid_count() const {
    return static_cast<std::size_t>(std::count(valid_mask.begin(), valid_mask.end(), std::uint8_t{1}));
}

std::size_t Batch::masked_count() const {
    return static_cast<std::size_t>(std::count(mlm_mask.begin(), mlm_mask.end(), std::uint8_t{1}));
}

Batch make_batch(const std::vector<MaskedSample>& samples, std::optional<std::size_t> pad_to) {
    if (samples.empty()) throw DataError("cannot build an empty batch");
    std::size_t longest = 0;
    for (const auto& s : samples) longest = std::max(longest, s.input_ids.size());
    const std::size_t length = pad_to.value_or(longest);
    Batch b;
    b.batch_size = samples.size();
    b.length = length;
    b.input_ids.assign(b.batch_size * length, kPadId);
    b.target_ids.assign(b.batch_size * length, kPadId);
    b.valid_mask.assign(b.batch_size * length, 0);
    b.mlm_mask.assign(b.batch_size * length, 0);
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const auto& s = samples[r];
        if (s.input_ids.size() > length) {
            throw DataError("sample '" + s.id + "' has " + std::to_string(s.input_ids.size()) +
                            " tokens, more than the batch length " + std::to_string(length));
        }
        std::copy(s.input_ids.begin(), s.input_ids.end(), b.input_ids.begin() + static_cast<std::ptrdiff_t>(r * length));
        std::copy(s.target_ids.begin(), s.target_ids.end(), b.target_ids.begin() + static_cast<std::ptrdiff_t>(r * length));
        for (std::size_t p = 0; p < s.input_ids.size(); ++p) b.valid_mask[r * length + p] = s.target_ids[p] != kPadId;
        for (auto p : s.mask_positions) b.mlm_mask[r * length + p] = 1;
        b.sample_ids.push_back(s.id);
    }
    return b;
}

std::vector<Record> parse_records(std::istream& in, const std::string& source) {
    std::vector<Record> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = source + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("text") ||
            !j["text"].is_string()) {
            throw DataError(where + ": record needs string fields \"id\" and \"text\"");
        }
        Record r{j["id"].get<std::string>(), j["text"].get<std::string>(), std::nullopt, {}};
        if (j.contains("label")) {
            if (!j["label"].is_number()) throw DataError(where + ": \"label\" must be a number");
            r.label = j["label"].get<double>();
        }
        if (j.contains("labels")) {
            if (!j["labels"].is_object()) throw DataError(where + ": \"labels\" must be an object");
            for (const auto& [k, v] : j["labels"].items()) {
                if (!v.is_number()) throw DataError(where + ": label '" + k + "' must be a number");
                r.labels[k] = v.get<double>();
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<Record> read_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read dataset " + path);
    return parse_records(in, path);
}

void write_records(const std::vector<Record>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write dataset " + path);
    for (const auto& r : records) {
        nlohmann::json j{{"id", r.id}, {"text", r.text}};
        if (r.label) j["label"] = *r.label;
        if (!r.labels.empty()) j["labels"] = r.labels;
        out << j.dump() << '\n';
    }
}

}  // namespace alkd
