#include "cfdtm/embeddings.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cfdtm {

namespace {
constexpr double kInitStddev = 0.02;
}

bool EmbeddingState::all_finite() const {
    if (!word_embeddings.allFinite()) return false;
    for (const auto& phi : topic_embeddings) {
        if (!phi.allFinite()) return false;
    }
    return true;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c) {
        for (int r = 0; r < rows; ++r) m(r, c) = rng.gaussian(stddev);
    }
    return m;
}

Eigen::MatrixXd load_word_embeddings(const std::string& vector_file, const VocabularyIndex& vocab,
                                     int dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("load_word_embeddings: dim must be >= 1");
    std::ifstream in(vector_file);
    if (!in) throw std::runtime_error("cannot open vector file: " + vector_file);

    Eigen::MatrixXd W(dim, vocab.size());
    std::vector<bool> found(static_cast<std::size_t>(vocab.size()), false);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto first_space = line.find(' ');
        if (first_space == std::string::npos) {
            throw std::runtime_error(vector_file + ":" + std::to_string(line_no) +
                                     ": expected 'token v_1 ... v_D'");
        }
        const int id = vocab.id_of(line.substr(0, first_space));
        if (id < 0) continue;
        if (found[static_cast<std::size_t>(id)]) continue;  // first occurrence wins
        std::istringstream values(line.substr(first_space + 1));
        for (int d = 0; d < dim; ++d) {
            if (!(values >> W(d, id))) {
                throw std::runtime_error(vector_file + ":" + std::to_string(line_no) +
                                         ": fewer than " + std::to_string(dim) + " components");
            }
        }
        double extra;
        if (values >> extra) {
            throw std::runtime_error(vector_file + ":" + std::to_string(line_no) +
                                     ": more than " + std::to_string(dim) + " components");
        }
        found[static_cast<std::size_t>(id)] = true;
    }

    // Missing tokens are filled in vocabulary order from one seeded stream.
    Rng rng(seed);
    for (int i = 0; i < vocab.size(); ++i) {
        if (found[static_cast<std::size_t>(i)]) continue;
        for (int d = 0; d < dim; ++d) W(d, i) = rng.gaussian(kInitStddev);
    }
    return W;
}

Eigen::MatrixXd init_word_embeddings(int vocab_size, int dim, std::uint64_t seed) {
    if (vocab_size < 1 || dim < 1) {
        throw std::invalid_argument("init_word_embeddings: vocab_size and dim must be >= 1");
    }
    Rng rng(seed);
    Eigen::MatrixXd W(dim, vocab_size);
    for (int i = 0; i < vocab_size; ++i) {
        for (int d = 0; d < dim; ++d) W(d, i) = rng.gaussian(kInitStddev);
    }
    return W;
}

std::vector<Eigen::MatrixXd> init_topic_embeddings(int num_slices, int num_topics, int dim,
                                                   std::uint64_t seed) {
    if (num_slices < 1 || num_topics < 1 || dim < 1) {
        throw std::invalid_argument("init_topic_embeddings: T, K, D must all be >= 1");
    }
    Rng rng(seed);
    std::vector<Eigen::MatrixXd> phi;
    phi.reserve(static_cast<std::size_t>(num_slices));
    for (int t = 0; t < num_slices; ++t) {
        Eigen::MatrixXd m(num_topics, dim);
        for (int k = 0; k < num_topics; ++k) {
            for (int d = 0; d < dim; ++d) m(k, d) = rng.gaussian(kInitStddev);
        }
        phi.push_back(std::move(m));
    }
    return phi;
}

}  // namespace cfdtm
