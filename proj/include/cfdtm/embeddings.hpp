#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdtm/corpus.hpp"
#include "cfdtm/util.hpp"

namespace cfdtm {

// Trainable embedding parameters. Word embeddings are one D x |V| matrix
// shared by every slice; topic embeddings are one K x D matrix per slice.
struct EmbeddingState {
    Eigen::MatrixXd word_embeddings;               // D x |V|
    std::vector<Eigen::MatrixXd> topic_embeddings;  // T entries, each K x D
    int dim = 0;

    int num_slices() const { return static_cast<int>(topic_embeddings.size()); }
    int num_topics() const {
        return topic_embeddings.empty() ? 0 : static_cast<int>(topic_embeddings[0].rows());
    }
    bool all_finite() const;
};

// Reads GloVe-style text rows ("token v_1 ... v_D"). In-vocabulary tokens get
// their pretrained vector; everything else is drawn i.i.d. Gaussian with
// standard deviation 0.02, in vocabulary-index order so the result does not
// depend on file order.
Eigen::MatrixXd load_word_embeddings(const std::string& vector_file, const VocabularyIndex& vocab,
                                     int dim, std::uint64_t seed);

// All-Gaussian initialization, used when no pretrained vectors are supplied.
Eigen::MatrixXd init_word_embeddings(int vocab_size, int dim, std::uint64_t seed);

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng);

std::vector<Eigen::MatrixXd> init_topic_embeddings(int num_slices, int num_topics, int dim,
                                                   std::uint64_t seed);

}  // namespace cfdtm
