#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cfdtm {

struct RawDocument {
    std::string text;
    std::string timestamp;  // slice key source; integer timestamps keep their decimal form
    std::string label;      // empty when absent
};

class VocabularyIndex {
public:
    VocabularyIndex() = default;
    explicit VocabularyIndex(std::vector<std::string> tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    // -1 when the token is not in the vocabulary.
    int id_of(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? -1 : it->second;
    }

    std::uint64_t hash() const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// Sparse nonnegative counts over the global vocabulary.
// Entries are (word id, count) with strictly increasing ids.
struct BowDocument {
    std::vector<std::pair<int, int>> counts;
    int total = 0;
};

struct CorpusSlice {
    std::string key;
    std::vector<BowDocument> documents;
    std::vector<int> vocabulary;  // sorted word ids occurring in this slice
    std::vector<std::string> labels;  // empty, or one entry per document
    // Preprocessed token streams (before the vocabulary cap), one per retained
    // document; these serve as the slice reference corpus for coherence.
    std::vector<std::vector<std::string>> reference_tokens;

    int num_documents() const { return static_cast<int>(documents.size()); }
};

struct TimeSlicedCorpus {
    VocabularyIndex vocab;
    std::vector<CorpusSlice> slices;

    int num_slices() const { return static_cast<int>(slices.size()); }
    std::size_t total_documents() const;
    const std::vector<int>& slice_vocabulary(int t) const;
    bool has_labels() const;
};

struct CorpusOptions {
    int max_vocab = 10000;
    int min_df = 1;
    // Maps raw timestamp values to slice keys. Empty means "group by raw
    // timestamp value". A nonempty map must cover every timestamp seen.
    std::map<std::string, std::string> slice_map;
};

// Lowercases, maps punctuation to spaces, splits on whitespace, then drops
// tokens containing digits, tokens shorter than 3 characters, and stopwords.
std::vector<std::string> preprocess_document(std::string_view text,
                                             const std::unordered_set<std::string>& stopwords);

TimeSlicedCorpus build_corpus(const std::vector<RawDocument>& docs, const CorpusOptions& options,
                              const std::unordered_set<std::string>& stopwords);

const std::unordered_set<std::string>& default_stopwords();
std::unordered_set<std::string> load_stopword_file(const std::string& path);

// One JSON object per line: {"text": ..., "timestamp": ..., "label": ...?}.
// Throws std::runtime_error naming the offending line on malformed input.
std::vector<RawDocument> read_jsonl(const std::string& path);

// Parses "timestamp<TAB>slice" lines into a slice map.
std::map<std::string, std::string> load_slice_map(const std::string& path);

void save_corpus_bundle(const TimeSlicedCorpus& corpus, const std::string& dir);
TimeSlicedCorpus load_corpus_bundle(const std::string& dir);

}  // namespace cfdtm
