#include "cfdtm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cfdtm/util.hpp"

namespace fs = std::filesystem;

namespace cfdtm {

namespace {

enum class CharClass { keep, space, punct };

CharClass classify_codepoint(char32_t cp) {
    if (cp < 0x80) {
        const auto c = static_cast<unsigned char>(cp);
        if (std::isspace(c) || cp < 0x20) return CharClass::space;
        if (std::ispunct(c)) return CharClass::punct;
        return CharClass::keep;
    }
    // Common Unicode whitespace.
    if (cp == 0x00A0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
        cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000) {
        return CharClass::space;
    }
    // General punctuation, CJK symbols, fullwidth forms, and a few Latin-1 marks.
    if ((cp >= 0x2010 && cp <= 0x205E) || (cp >= 0x3001 && cp <= 0x303F) ||
        (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
        (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65) || cp == 0x00A1 ||
        cp == 0x00AB || cp == 0x00AD || cp == 0x00B7 || cp == 0x00BB || cp == 0x00BF) {
        return CharClass::punct;
    }
    return CharClass::keep;
}

// Decodes one UTF-8 codepoint starting at i; malformed bytes pass through as
// single keep-characters so arbitrary input never throws.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
    const auto first = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = first;
    if (first >= 0xF0) {
        extra = 3;
        cp = first & 0x07U;
    } else if (first >= 0xE0) {
        extra = 2;
        cp = first & 0x0FU;
    } else if (first >= 0xC0) {
        extra = 1;
        cp = first & 0x1FU;
    }
    if (i + static_cast<std::size_t>(extra) >= s.size()) {
        ++i;
        return first;
    }
    for (int k = 1; k <= extra; ++k) {
        const auto cont = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((cont & 0xC0U) != 0x80U) {
            ++i;
            return first;
        }
        cp = (cp << 6) | (cont & 0x3FU);
    }
    i += static_cast<std::size_t>(extra) + 1;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::size_t codepoint_length(std::string_view token) {
    std::size_t n = 0;
    for (char c : token) {
        if ((static_cast<unsigned char>(c) & 0xC0U) != 0x80U) ++n;
    }
    return n;
}

bool contains_digit(std::string_view token) {
    return std::any_of(token.begin(), token.end(),
                       [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool all_integer_keys(const std::vector<std::string>& keys) {
    for (const auto& k : keys) {
        if (k.empty()) return false;
        std::size_t start = (k[0] == '-') ? 1 : 0;
        if (start == k.size()) return false;
        for (std::size_t i = start; i < k.size(); ++i) {
            if (!std::isdigit(static_cast<unsigned char>(k[i]))) return false;
        }
    }
    return true;
}

void sort_slice_keys(std::vector<std::string>& keys) {
    if (all_integer_keys(keys)) {
        std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) {
            long long va = 0, vb = 0;
            std::from_chars(a.data(), a.data() + a.size(), va);
            std::from_chars(b.data(), b.data() + b.size(), vb);
            if (va != vb) return va < vb;
            return a < b;
        });
    } else {
        std::sort(keys.begin(), keys.end());
    }
}

std::string slice_file(const std::string& dir, int t, const char* suffix) {
    std::ostringstream oss;
    oss << dir << "/slice_" << std::setw(4) << std::setfill('0') << t << "." << suffix;
    return oss.str();
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

}  // namespace

VocabularyIndex::VocabularyIndex(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    ids_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("VocabularyIndex: duplicate token '" + tokens_[i] + "'");
        }
    }
}

std::uint64_t VocabularyIndex::hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& t : tokens_) {
        h = fnv1a64(t, h);
        h = fnv1a64("\n", h);
    }
    return h;
}

std::size_t TimeSlicedCorpus::total_documents() const {
    std::size_t n = 0;
    for (const auto& s : slices) n += s.documents.size();
    return n;
}

const std::vector<int>& TimeSlicedCorpus::slice_vocabulary(int t) const {
    if (t < 0 || t >= num_slices()) {
        throw std::out_of_range("slice_vocabulary: slice index " + std::to_string(t) +
                                " out of range [0, " + std::to_string(num_slices()) + ")");
    }
    return slices[static_cast<std::size_t>(t)].vocabulary;
}

bool TimeSlicedCorpus::has_labels() const {
    return std::any_of(slices.begin(), slices.end(),
                       [](const CorpusSlice& s) { return !s.labels.empty(); });
}

std::vector<std::string> preprocess_document(std::string_view text,
                                             const std::unordered_set<std::string>& stopwords) {
    std::string normalized;
    normalized.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = decode_utf8(text, i);
        switch (classify_codepoint(cp)) {
            case CharClass::space:
            case CharClass::punct:
                normalized.push_back(' ');
                break;
            case CharClass::keep:
                if (cp < 0x80) {
                    normalized.push_back(
                        static_cast<char>(std::tolower(static_cast<unsigned char>(cp))));
                } else {
                    append_utf8(normalized, cp);
                }
                break;
        }
    }

    std::vector<std::string> tokens;
    for (auto& tok : split_whitespace(normalized)) {
        if (contains_digit(tok)) continue;
        if (codepoint_length(tok) < 3) continue;
        if (stopwords.count(tok) != 0) continue;
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

TimeSlicedCorpus build_corpus(const std::vector<RawDocument>& docs, const CorpusOptions& options,
                              const std::unordered_set<std::string>& stopwords) {
    if (docs.empty()) throw std::invalid_argument("build_corpus: document list is empty");
    if (options.max_vocab < 1) throw std::invalid_argument("build_corpus: max_vocab must be >= 1");

    // Per-document preprocessing is pure; run it in parallel into fixed slots.
    std::vector<std::vector<std::string>> token_streams(docs.size());
    parallel_for(docs.size(), [&](std::size_t i) {
        token_streams[i] = preprocess_document(docs[i].text, stopwords);
    });

    // Resolve slice keys.
    std::vector<std::string> doc_slice_key(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (options.slice_map.empty()) {
            doc_slice_key[i] = docs[i].timestamp;
        } else {
            auto it = options.slice_map.find(docs[i].timestamp);
            if (it == options.slice_map.end()) {
                throw std::runtime_error("build_corpus: timestamp '" + docs[i].timestamp +
                                         "' maps to no slice");
            }
            doc_slice_key[i] = it->second;
        }
    }

    // Corpus and document frequencies over preprocessed tokens.
    std::unordered_map<std::string, long long> corpus_freq;
    std::unordered_map<std::string, int> doc_freq;
    for (const auto& stream : token_streams) {
        std::unordered_set<std::string> seen;
        for (const auto& tok : stream) {
            ++corpus_freq[tok];
            if (seen.insert(tok).second) ++doc_freq[tok];
        }
    }

    std::vector<std::pair<std::string, long long>> candidates;
    candidates.reserve(corpus_freq.size());
    for (const auto& [tok, count] : corpus_freq) {
        if (doc_freq[tok] >= options.min_df) candidates.emplace_back(tok, count);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (candidates.size() > static_cast<std::size_t>(options.max_vocab)) {
        candidates.resize(static_cast<std::size_t>(options.max_vocab));
    }
    std::vector<std::string> vocab_tokens;
    vocab_tokens.reserve(candidates.size());
    for (auto& [tok, count] : candidates) vocab_tokens.push_back(std::move(tok));
    VocabularyIndex vocab(std::move(vocab_tokens));

    // Group retained documents by slice, preserving input order within a slice.
    const bool any_label =
        std::any_of(docs.begin(), docs.end(), [](const RawDocument& d) { return !d.label.empty(); });
    std::map<std::string, CorpusSlice> by_key;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        std::unordered_map<int, int> counts;
        for (const auto& tok : token_streams[i]) {
            const int id = vocab.id_of(tok);
            if (id >= 0) ++counts[id];
        }
        if (counts.empty()) {
            ++dropped;
            continue;
        }
        BowDocument bow;
        bow.counts.assign(counts.begin(), counts.end());
        std::sort(bow.counts.begin(), bow.counts.end());
        for (const auto& [id, c] : bow.counts) bow.total += c;

        CorpusSlice& slice = by_key[doc_slice_key[i]];
        slice.key = doc_slice_key[i];
        slice.documents.push_back(std::move(bow));
        slice.reference_tokens.push_back(std::move(token_streams[i]));
        if (any_label) slice.labels.push_back(docs[i].label);
    }
    if (by_key.empty()) {
        throw std::runtime_error("build_corpus: all documents became empty after preprocessing");
    }
    if (dropped > 0) {
        std::cerr << "[corpus] dropped " << dropped << " document(s) with no in-vocabulary tokens\n";
    }

    std::vector<std::string> keys;
    keys.reserve(by_key.size());
    for (const auto& [key, slice] : by_key) keys.push_back(key);
    sort_slice_keys(keys);

    TimeSlicedCorpus corpus;
    corpus.vocab = std::move(vocab);
    corpus.slices.reserve(keys.size());
    for (const auto& key : keys) {
        CorpusSlice slice = std::move(by_key[key]);
        std::unordered_set<int> present;
        for (const auto& doc : slice.documents) {
            for (const auto& [id, c] : doc.counts) present.insert(id);
        }
        slice.vocabulary.assign(present.begin(), present.end());
        std::sort(slice.vocabulary.begin(), slice.vocabulary.end());
        corpus.slices.push_back(std::move(slice));
    }
    return corpus;
}

const std::unordered_set<std::string>& default_stopwords() {
    static const std::unordered_set<std::string> words = {
        "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
        "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself",
        "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "which",
        "who", "whom", "this", "that", "these", "those", "am", "is", "are", "was", "were", "be",
        "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
        "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by",
        "for", "with", "about", "against", "between", "into", "through", "during", "before",
        "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over",
        "under", "again", "further", "then", "once", "here", "there", "when", "where", "why",
        "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no",
        "nor", "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will",
        "just", "don", "should", "now", "also", "would", "could", "may", "might", "must", "shall",
        "upon", "via"};
    return words;
}

std::unordered_set<std::string> load_stopword_file(const std::string& path) {
    auto in = open_or_throw(path);
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto word = trim(line);
        if (!word.empty()) words.insert(std::move(word));
    }
    return words;
}

std::vector<RawDocument> read_jsonl(const std::string& path) {
    auto in = open_or_throw(path);
    std::vector<RawDocument> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed JSON line: " + e.what());
        }
        if (!obj.is_object() || !obj.contains("text") || !obj["text"].is_string()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected an object with a string \"text\" field");
        }
        if (!obj.contains("timestamp") ||
            !(obj["timestamp"].is_string() || obj["timestamp"].is_number_integer())) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected a string or integer \"timestamp\" field");
        }
        RawDocument doc;
        doc.text = obj["text"].get<std::string>();
        doc.timestamp = obj["timestamp"].is_string()
                            ? obj["timestamp"].get<std::string>()
                            : std::to_string(obj["timestamp"].get<long long>());
        if (obj.contains("label")) {
            if (!obj["label"].is_string()) {
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": \"label\" must be a string");
            }
            doc.label = obj["label"].get<std::string>();
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::map<std::string, std::string> load_slice_map(const std::string& path) {
    auto in = open_or_throw(path);
    std::map<std::string, std::string> mapping;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 'timestamp<TAB>slice'");
        }
        mapping[trim(line.substr(0, tab))] = trim(line.substr(tab + 1));
    }
    return mapping;
}

void save_corpus_bundle(const TimeSlicedCorpus& corpus, const std::string& dir) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir + "/vocab.txt");
        if (!out) throw std::runtime_error("cannot write " + dir + "/vocab.txt");
        for (const auto& tok : corpus.vocab.tokens()) out << tok << "\n";
    }
    {
        std::ofstream out(dir + "/slices.tsv");
        for (int t = 0; t < corpus.num_slices(); ++t) {
            const auto& s = corpus.slices[static_cast<std::size_t>(t)];
            out << t << "\t" << s.key << "\t" << s.num_documents() << "\n";
        }
    }
    const bool labels = corpus.has_labels();
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const auto& s = corpus.slices[static_cast<std::size_t>(t)];
        {
            std::ofstream out(slice_file(dir, t, "counts.txt"));
            for (std::size_t d = 0; d < s.documents.size(); ++d) {
                for (const auto& [id, c] : s.documents[d].counts) {
                    out << d << " " << id << " " << c << "\n";
                }
            }
        }
        {
            std::ofstream out(slice_file(dir, t, "vocab.txt"));
            for (int id : s.vocabulary) out << id << "\n";
        }
        {
            std::ofstream out(slice_file(dir, t, "ref.txt"));
            for (const auto& stream : s.reference_tokens) {
                for (std::size_t i = 0; i < stream.size(); ++i) {
                    if (i) out << ' ';
                    out << stream[i];
                }
                out << "\n";
            }
        }
        if (labels) {
            std::ofstream out(slice_file(dir, t, "labels.txt"));
            for (const auto& label : s.labels) out << label << "\n";
        }
    }
}

TimeSlicedCorpus load_corpus_bundle(const std::string& dir) {
    TimeSlicedCorpus corpus;
    {
        auto in = open_or_throw(dir + "/vocab.txt");
        std::vector<std::string> tokens;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) tokens.push_back(line);
        }
        corpus.vocab = VocabularyIndex(std::move(tokens));
    }
    struct SliceMeta {
        int index;
        std::string key;
        int num_docs;
    };
    std::vector<SliceMeta> metas;
    {
        auto in = open_or_throw(dir + "/slices.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            std::istringstream iss(line);
            SliceMeta m;
            if (!(iss >> m.index >> m.key >> m.num_docs)) {
                throw std::runtime_error(dir + "/slices.tsv: malformed line '" + line + "'");
            }
            metas.push_back(std::move(m));
        }
    }
    for (const auto& meta : metas) {
        CorpusSlice slice;
        slice.key = meta.key;
        slice.documents.resize(static_cast<std::size_t>(meta.num_docs));
        {
            auto in = open_or_throw(slice_file(dir, meta.index, "counts.txt"));
            int d = 0, id = 0, c = 0;
            while (in >> d >> id >> c) {
                if (d < 0 || d >= meta.num_docs || id < 0 || id >= corpus.vocab.size() || c <= 0) {
                    throw std::runtime_error("corrupt counts in bundle slice " +
                                             std::to_string(meta.index));
                }
                auto& doc = slice.documents[static_cast<std::size_t>(d)];
                doc.counts.emplace_back(id, c);
                doc.total += c;
            }
        }
        for (auto& doc : slice.documents) {
            if (doc.counts.empty()) {
                throw std::runtime_error("bundle slice " + std::to_string(meta.index) +
                                         " contains an empty document");
            }
            std::sort(doc.counts.begin(), doc.counts.end());
        }
        {
            auto in = open_or_throw(slice_file(dir, meta.index, "vocab.txt"));
            int id = 0;
            while (in >> id) slice.vocabulary.push_back(id);
        }
        {
            auto in = open_or_throw(slice_file(dir, meta.index, "ref.txt"));
            std::string line;
            while (std::getline(in, line)) {
                slice.reference_tokens.push_back(split_whitespace(line));
            }
        }
        const std::string label_path = slice_file(dir, meta.index, "labels.txt");
        if (fs::exists(label_path)) {
            auto in = open_or_throw(label_path);
            std::string line;
            while (std::getline(in, line)) slice.labels.push_back(trim(line));
            if (slice.labels.size() != slice.documents.size()) {
                throw std::runtime_error("bundle slice " + std::to_string(meta.index) +
                                         ": label count does not match document count");
            }
        }
        corpus.slices.push_back(std::move(slice));
    }
    if (corpus.slices.empty()) throw std::runtime_error("bundle has no slices: " + dir);
    return corpus;
}

}  // namespace cfdtm
