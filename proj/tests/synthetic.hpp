#pragma once

// Planted-topic corpus generator for end-to-end trainer checks.
//
// Layout: a "core" block of topic-specific words shared by every slice, a
// "background" block appearing in all documents, and per-slice word blocks
// that never occur outside their slice. Within a topic's core the sampling
// weights drift smoothly across slices, so the same topic emphasizes
// different core words over time.

#include <cstdint>
#include <string>
#include <vector>

#include "cfdtm/corpus.hpp"
#include "cfdtm/util.hpp"

namespace synthetic {

struct PlantedSpec {
    int num_slices = 4;
    int num_topics = 5;
    int core_per_topic = 20;
    int background_words = 20;
    int slice_group_words = 9;  // per topic per slice
    int docs_per_slice = 150;
    std::uint64_t seed = 1;
};

inline std::string letters(int value) {
    std::string s;
    for (int i = 0; i < 3; ++i) {
        s.push_back(static_cast<char>('a' + value % 26));
        value /= 26;
    }
    return s;
}

inline std::string core_word(int topic, int index, const PlantedSpec& spec) {
    return "core" + letters(topic * spec.core_per_topic + index);
}

inline std::string background_word(int index) { return "bg" + letters(index); }

inline std::string slice_word(int slice, int topic, int index, const PlantedSpec& spec) {
    return "sl" + letters((slice * spec.num_topics + topic) * spec.slice_group_words + index);
}

// Draws an index in [0, weights.size()) proportional to weights.
inline int weighted_draw(const std::vector<double>& weights, double total, cfdtm::Rng& rng) {
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        u -= weights[i];
        if (u <= 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
}

inline std::vector<cfdtm::RawDocument> make_planted_corpus(const PlantedSpec& spec) {
    cfdtm::Rng rng(spec.seed);
    std::vector<cfdtm::RawDocument> docs;
    docs.reserve(static_cast<std::size_t>(spec.num_slices * spec.docs_per_slice));

    for (int t = 0; t < spec.num_slices; ++t) {
        // Coverage documents pin down the designed slice vocabulary: one per
        // topic holding its full core plus its slice group.
        for (int k = 0; k < spec.num_topics; ++k) {
            std::string text;
            for (int i = 0; i < spec.core_per_topic; ++i) text += core_word(k, i, spec) + " ";
            for (int i = 0; i < spec.slice_group_words; ++i) {
                text += slice_word(t, k, i, spec) + " ";
            }
            text += background_word(static_cast<int>(rng.uniform_index(spec.background_words)));
            docs.push_back({text, std::to_string(2000 + t), "topic" + std::to_string(k)});
        }

        const int sampled = spec.docs_per_slice - spec.num_topics;
        for (int d = 0; d < sampled; ++d) {
            const int z = d % spec.num_topics;  // balanced planted topics

            // Core weights drift across slices: a moving Gaussian bump.
            std::vector<double> weights(static_cast<std::size_t>(spec.core_per_topic));
            const double center = 4.0 + 4.0 * t;
            double total = 0.0;
            for (int i = 0; i < spec.core_per_topic; ++i) {
                const double diff = static_cast<double>(i) - center;
                weights[static_cast<std::size_t>(i)] = std::exp(-diff * diff / 72.0);
                total += weights[static_cast<std::size_t>(i)];
            }

            std::string text;
            for (int i = 0; i < 8; ++i) {
                text += background_word(static_cast<int>(rng.uniform_index(spec.background_words))) +
                        " ";
            }
            for (int i = 0; i < 20; ++i) {
                text += core_word(z, weighted_draw(weights, total, rng), spec) + " ";
            }
            for (int i = 0; i < 8; ++i) {
                text += slice_word(t, z,
                                   static_cast<int>(rng.uniform_index(spec.slice_group_words)),
                                   spec) +
                        " ";
            }
            // Light cross-topic noise from another topic's core.
            const int other = static_cast<int>(rng.uniform_index(spec.num_topics));
            for (int i = 0; i < 2; ++i) {
                text += core_word(other,
                                  static_cast<int>(rng.uniform_index(spec.core_per_topic)), spec) +
                        " ";
            }
            docs.push_back({text, std::to_string(2000 + t), "topic" + std::to_string(z)});
        }
    }
    return docs;
}

inline cfdtm::TimeSlicedCorpus build_planted(const PlantedSpec& spec) {
    cfdtm::CorpusOptions opts;
    opts.max_vocab = spec.num_topics * spec.core_per_topic + spec.background_words +
                     spec.num_slices * spec.num_topics * spec.slice_group_words;
    return cfdtm::build_corpus(make_planted_corpus(spec), opts, {});
}

// Planted topic index per document, aligned with corpus slice order.
inline std::vector<int> planted_labels(const cfdtm::TimeSlicedCorpus& corpus) {
    std::vector<int> labels;
    for (const auto& slice : corpus.slices) {
        for (const auto& label : slice.labels) {
            labels.push_back(std::stoi(label.substr(5)));
        }
    }
    return labels;
}

}  // namespace synthetic
