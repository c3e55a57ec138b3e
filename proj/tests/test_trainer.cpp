#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cfdtm/trainer.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace cfdtm;

namespace {

TrainConfig small_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.num_topics = 3;
    cfg.epochs = 5;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 16;
    cfg.seed = seed;
    cfg.hidden = 16;
    cfg.embedding_dim = 8;
    cfg.loss.n_top = 4;
    return cfg;
}

TimeSlicedCorpus tiny_corpus() {
    synthetic::PlantedSpec spec;
    spec.num_slices = 2;
    spec.num_topics = 3;
    spec.core_per_topic = 6;
    spec.background_words = 4;
    spec.slice_group_words = 3;
    spec.docs_per_slice = 24;
    spec.seed = 99;
    return synthetic::build_planted(spec);
}

bool states_equal(const ModelState& a, const ModelState& b) {
    if (a.embeddings.word_embeddings != b.embeddings.word_embeddings) return false;
    for (std::size_t t = 0; t < a.embeddings.topic_embeddings.size(); ++t) {
        if (a.embeddings.topic_embeddings[t] != b.embeddings.topic_embeddings[t]) return false;
    }
    return a.encoder.w1 == b.encoder.w1 && a.encoder.b1 == b.encoder.b1 &&
           a.encoder.w2 == b.encoder.w2 && a.encoder.b2 == b.encoder.b2 &&
           a.encoder.wmu == b.encoder.wmu && a.encoder.bmu == b.encoder.bmu &&
           a.encoder.wlv == b.encoder.wlv && a.encoder.blv == b.encoder.blv &&
           a.epoch == b.epoch && a.adam.step == b.adam.step;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("epochs=0 returns the initialized state unchanged") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(7);
    cfg.epochs = 0;
    const auto trained = train(corpus, cfg);
    const auto baseline = init_model(corpus, cfg);
    CHECK(states_equal(trained, baseline));
    CHECK(trained.epoch == 0);
}

TEST_CASE("same seed trains to bit-identical parameters") {
    const auto corpus = tiny_corpus();
    const auto cfg = small_config(11);
    const auto a = train(corpus, cfg);
    const auto b = train(corpus, cfg);
    CHECK(states_equal(a, b));

    auto other = small_config(12);
    const auto c = train(corpus, other);
    CHECK_FALSE(states_equal(a, c));
}

TEST_CASE("epoch-mean total loss decreases on a 200-doc synthetic corpus") {
    synthetic::PlantedSpec spec;
    spec.num_slices = 2;
    spec.num_topics = 4;
    spec.core_per_topic = 8;
    spec.background_words = 6;
    spec.slice_group_words = 4;
    spec.docs_per_slice = 100;
    spec.seed = 5;
    const auto corpus = synthetic::build_planted(spec);

    TrainConfig cfg;
    cfg.num_topics = 4;
    cfg.epochs = 50;
    cfg.learning_rate = 0.005;
    cfg.batch_size = 50;
    cfg.seed = 13;
    cfg.hidden = 32;
    cfg.embedding_dim = 8;
    cfg.loss.n_top = 5;

    std::vector<double> totals;
    train(corpus, cfg, [&](const EpochStats& s) { totals.push_back(s.mean_losses.total()); });
    REQUIRE(totals.size() == 50);
    CHECK(totals.back() < totals.front());
}

TEST_CASE("with ETC and UWE off the total equals the topic-model loss") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(21);
    cfg.loss.enable_etc = false;
    cfg.loss.enable_uwe = false;
    cfg.loss.lambda_uwe = 0.0;
    bool saw_epoch = false;
    train(corpus, cfg, [&](const EpochStats& s) {
        saw_epoch = true;
        CHECK(s.mean_losses.total() == s.mean_losses.tm);
        CHECK(s.mean_losses.pos == 0.0);
        CHECK(s.mean_losses.neg == 0.0);
        CHECK(s.mean_losses.uwe == 0.0);
    });
    CHECK(saw_epoch);
}

TEST_CASE("training aborts with a diagnostic when the loss diverges") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(31);
    cfg.learning_rate = 1e12;  // deliberately absurd
    cfg.epochs = 10;
    CHECK_THROWS_AS(train(corpus, cfg), std::exception);
}

TEST_CASE("infer_theta returns simplex rows, identically for duplicate docs") {
    const auto corpus = tiny_corpus();
    const auto state = train(corpus, small_config(41));
    std::vector<BatchDoc> docs;
    const auto& first = corpus.slices[0].documents[0];
    docs.push_back({&first, 0});
    docs.push_back({&first, 0});
    docs.push_back({&corpus.slices[1].documents[2], 1});
    const auto theta = infer_theta(state, docs);
    REQUIRE(theta.rows() == 3);
    for (int i = 0; i < theta.rows(); ++i) {
        CHECK(std::abs(theta.row(i).sum() - 1.0) < 1e-6);
        CHECK((theta.row(i).array() >= 0.0).all());
    }
    CHECK(theta.row(0) == theta.row(1));
}

TEST_CASE("export_topics ranks by beta with ties toward lower ids") {
    const auto corpus = tiny_corpus();
    const auto state = init_model(corpus, small_config(51));
    const int V = corpus.vocab.size();

    const auto full = export_topics(state, corpus, V);
    REQUIRE(static_cast<int>(full.size()) == corpus.num_slices() * state.config.num_topics);
    for (const auto& entry : full) {
        // n_words = |V| yields a permutation of the vocabulary.
        std::vector<int> sorted_ids = entry.word_ids;
        std::sort(sorted_ids.begin(), sorted_ids.end());
        std::vector<int> expected(static_cast<std::size_t>(V));
        std::iota(expected.begin(), expected.end(), 0);
        CHECK(sorted_ids == expected);
        // Scores are the beta values in non-increasing order.
        for (std::size_t i = 1; i < entry.scores.size(); ++i) {
            CHECK(entry.scores[i] <= entry.scores[i - 1]);
        }
    }

    const auto top3 = export_topics(state, corpus, 3);
    for (const auto& entry : top3) {
        const auto beta = export_beta(state, corpus, entry.slice);
        const auto oracle = oracles::top_words_sort_oracle(beta, 3);
        CHECK(entry.word_ids == oracle[static_cast<std::size_t>(entry.topic)]);
    }
}

TEST_CASE("export_word_evolution matches the naive beta oracle") {
    const auto corpus = tiny_corpus();
    const auto state = init_model(corpus, small_config(61));
    const std::vector<int> words = {0, 3, 7};
    const auto traj = export_word_evolution(state, corpus, words, 1);
    REQUIRE(traj.rows() == corpus.num_slices());
    REQUIRE(traj.cols() == 3);
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const auto beta = oracles::beta_naive(
            state.embeddings.topic_embeddings[static_cast<std::size_t>(t)],
            state.embeddings.word_embeddings, state.config.loss.pi);
        for (std::size_t w = 0; w < words.size(); ++w) {
            const double value = traj(t, static_cast<Eigen::Index>(w));
            CHECK(value == doctest::Approx(beta(1, words[w])).epsilon(1e-10));
            CHECK(value >= 0.0);
            CHECK(value <= 1.0);
        }
    }
}

TEST_CASE("masking mode zeroes unassociated columns in exported beta") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(71);
    cfg.loss.uwe_masking_mode = true;
    cfg.loss.n_top = corpus.vocab.size() / 2;
    const auto state = init_model(corpus, cfg);
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const auto raw = topic_word_distribution(
            state.embeddings.topic_embeddings[static_cast<std::size_t>(t)],
            state.embeddings.word_embeddings, cfg.loss.pi);
        const auto uw =
            unassociated_words(top_word_set(raw, cfg.loss.n_top), corpus.slice_vocabulary(t));
        const auto masked = export_beta(state, corpus, t);
        for (int word : uw) {
            for (int k = 0; k < masked.rows(); ++k) CHECK(masked(k, word) == 0.0);
        }
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(81);
    cfg.epochs = 3;
    const auto state = train(corpus, cfg);

    const auto dir = std::filesystem::temp_directory_path() / "cfdtm_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path_a = (dir / "a.ckpt").string();
    const auto path_b = (dir / "b.ckpt").string();

    save_checkpoint(state, path_a);
    const auto loaded = load_checkpoint(path_a);
    CHECK(states_equal(state, loaded));
    CHECK(loaded.vocab_hash == state.vocab_hash);
    CHECK(loaded.uwe_snapshot == state.uwe_snapshot);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.config.loss.tau == cfg.loss.tau);
    for (std::size_t i = 0; i < state.adam.m.size(); ++i) {
        CHECK(loaded.adam.m[i] == state.adam.m[i]);
        CHECK(loaded.adam.v[i] == state.adam.v[i]);
    }

    save_checkpoint(loaded, path_b);
    CHECK(file_bytes(path_a) == file_bytes(path_b));

    CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), std::runtime_error);
    {
        std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
        bad << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint((dir / "bad.ckpt").string()), std::runtime_error);
}

TEST_CASE("intermediate checkpoints fire on the configured cadence") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(91);
    cfg.epochs = 6;
    cfg.checkpoint_every = 2;
    std::vector<int> epochs_seen;
    train(corpus, cfg, nullptr, [&](const ModelState& s) { epochs_seen.push_back(s.epoch); });
    CHECK(epochs_seen == std::vector<int>{2, 4, 6});
}

TEST_CASE("frozen word embeddings stay at their initialization") {
    const auto corpus = tiny_corpus();
    auto cfg = small_config(95);
    cfg.freeze_word_embeddings = true;
    const auto trained = train(corpus, cfg);
    const auto baseline = init_model(corpus, cfg);
    CHECK(trained.embeddings.word_embeddings == baseline.embeddings.word_embeddings);
    CHECK(trained.embeddings.topic_embeddings[0] != baseline.embeddings.topic_embeddings[0]);
}
