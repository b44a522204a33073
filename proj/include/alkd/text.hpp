#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "alkd/rng.hpp"

namespace alkd {

using TokenId = std::int32_t;

class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kMaskId = 3;
inline constexpr std::size_t kNumReserved = 4;
inline constexpr std::string_view kContinuation = "##";
inline constexpr std::size_t kDefaultMaxLen = 128;

class Vocab {
   public:
    /// Reserved tokens only.
    Vocab();
    /// Tokens in id order; the first four must be the reserved tokens.
    explicit Vocab(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    std::optional<TokenId> find(std::string_view token) const;
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

   private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Lowercases ASCII, splits on whitespace and isolates ASCII punctuation.
std::vector<std::string> split_words(std::string_view text);

/// Frequency-ranked vocabulary: whole words by descending count (ties keep
/// first-seen order), then single-character word-initial and "##" pieces if
/// slots remain. Yields min(target_size, 4 + #candidates) entries.
Vocab induce_vocab(const std::vector<std::string>& corpus, std::size_t target_size);

struct TokenizedSample {
    std::string id;
    std::vector<TokenId> token_ids;  // token_ids[0] == [CLS]
    std::string raw_text;
};

/// Greedy longest-match word pieces; a word that cannot be fully segmented
/// becomes a single [UNK]. Output is truncated to max_len ids.
TokenizedSample tokenize(std::string id, std::string_view text, const Vocab& vocab,
                         std::size_t max_len = kDefaultMaxLen);

struct MaskedSample {
    std::string id;
    std::vector<TokenId> input_ids;
    std::vector<TokenId> target_ids;
    std::vector<std::size_t> mask_positions;
};

struct MaskingOptions {
    double rate = 0.15;
    /// BERT-style corruption: of the selected positions 80% become [MASK],
    /// 10% a random non-reserved token, 10% stay unchanged.
    bool bert_split = false;
};

MaskedSample mask_tokens(const TokenizedSample& sample, const MaskingOptions& options, std::size_t vocab_size,
                         Rng& rng);
MaskedSample mask_tokens(const TokenizedSample& sample, double rate, Rng& rng);

/// No corruption; used for fine-tuning and evaluation.
MaskedSample unmasked(const TokenizedSample& sample);

struct Batch {
    std::size_t batch_size = 0;
    std::size_t length = 0;
    std::vector<TokenId> input_ids;     // batch_size * length
    std::vector<TokenId> target_ids;    // batch_size * length
    std::vector<std::uint8_t> valid_mask;
    std::vector<std::uint8_t> mlm_mask;
    std::vector<std::string> sample_ids;

    std::size_t index(std::size_t row, std::size_t pos) const { return row * length + pos; }
    std::size_t valid_count() const;
    std::size_t masked_count() const;
};

/// Right-pads with [PAD] to the longest sample (or pad_to when given).
Batch make_batch(const std::vector<MaskedSample>& samples, std::optional<std::size_t> pad_to = std::nullopt);

// ----------------------------------------------------------------------------
// Newline-delimited JSON records: {"id", "text", "label"?, "labels"?}
// ----------------------------------------------------------------------------

struct Record {
    std::string id;
    std::string text;
    std::optional<double> label;
    std::map<std::string, double> labels;
};

std::vector<Record> parse_records(std::istream& in, const std::string& source = "<stream>");
std::vector<Record> read_records(const std::string& path);
void write_records(const std::vector<Record>& records, const std::string& path);

}  // namespace alkd
