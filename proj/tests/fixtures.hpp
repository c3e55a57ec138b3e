#pragma once

// Small randomized model instances shared by the objective and gradient
// tests. Sizes stay tiny so finite differences over every entry are cheap.

#include <cstdint>
#include <vector>

#include "cfdtm/embeddings.hpp"
#include "cfdtm/model.hpp"
#include "cfdtm/objectives.hpp"
#include "cfdtm/util.hpp"

namespace fixtures {

struct TinyInstance {
    std::vector<Eigen::MatrixXd> phi;
    Eigen::MatrixXd W;
    cfdtm::EncoderParams encoder;
    cfdtm::PriorParams prior;
    std::vector<cfdtm::BowDocument> doc_storage;
    std::vector<cfdtm::BatchDoc> batch;
    std::vector<Eigen::VectorXd> eps;
    std::vector<std::vector<int>> uw_sets;
    cfdtm::LossConfig cfg;

    cfdtm::ModelParamsView view() {
        cfdtm::ModelParamsView v;
        v.word_embeddings = &W;
        v.topic_embeddings = &phi;
        v.encoder = &encoder;
        v.prior = prior;
        v.pi = cfg.pi;
        v.normalize_counts = false;
        return v;
    }
};

inline TinyInstance make_tiny_instance(std::uint64_t seed, int T, int K, int D, int V, int H,
                                       int n_docs, bool random_eps) {
    cfdtm::Rng rng(seed);
    TinyInstance inst;
    for (int t = 0; t < T; ++t) {
        inst.phi.push_back(cfdtm::gaussian_matrix(K, D, 1.0, rng));
    }
    inst.W = cfdtm::gaussian_matrix(D, V, 1.0, rng);
    inst.encoder = cfdtm::EncoderParams::init(V, H, K, rng.next_u64());
    inst.prior = cfdtm::PriorParams::laplace_approximation(K);

    inst.doc_storage.reserve(static_cast<std::size_t>(n_docs));
    for (int d = 0; d < n_docs; ++d) {
        cfdtm::BowDocument doc;
        for (int i = 0; i < V; ++i) {
            if (rng.uniform() < 0.4) {
                const int count = 1 + static_cast<int>(rng.uniform_index(4));
                doc.counts.emplace_back(i, count);
                doc.total += count;
            }
        }
        if (doc.counts.empty()) {
            doc.counts.emplace_back(static_cast<int>(rng.uniform_index(V)), 1);
            doc.total = 1;
        }
        inst.doc_storage.push_back(std::move(doc));
    }
    for (int d = 0; d < n_docs; ++d) {
        inst.batch.push_back(
            {&inst.doc_storage[static_cast<std::size_t>(d)], static_cast<int>(rng.uniform_index(T))});
        Eigen::VectorXd e = Eigen::VectorXd::Zero(K);
        if (random_eps) {
            for (int k = 0; k < K; ++k) e(k) = rng.gaussian();
        }
        inst.eps.push_back(std::move(e));
    }

    inst.uw_sets.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < V; ++i) {
            if (rng.uniform() < 0.25) inst.uw_sets[static_cast<std::size_t>(t)].push_back(i);
        }
    }

    inst.cfg.tau = 0.1 + rng.uniform() * 0.4;
    inst.cfg.pi = 0.5 + rng.uniform();
    inst.cfg.gamma = 0.5 + rng.uniform();
    inst.cfg.lambda_uwe = 0.5 + rng.uniform();
    inst.cfg.n_top = std::min(3, V);
    inst.cfg.lambda_schedule.clear();
    for (int t = 0; t < T; ++t) inst.cfg.lambda_schedule.push_back(0.25 + rng.uniform() * 2.0);
    return inst;
}

}  // namespace fixtures
