#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfdtm/corpus.hpp"
#include "cfdtm/embeddings.hpp"
#include "cfdtm/model.hpp"
#include "cfdtm/objectives.hpp"

namespace cfdtm {

struct TrainConfig {
    int num_topics = 50;
    int epochs = 800;
    double learning_rate = 0.002;
    int batch_size = 200;
    std::uint64_t seed = 0;
    int hidden = 256;
    int embedding_dim = 200;
    bool normalize_counts = false;
    bool freeze_word_embeddings = false;
    int checkpoint_every = 0;  // 0 disables intermediate checkpoints
    std::string glove_path;    // empty: Gaussian-initialized word embeddings
    LossConfig loss;

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long long step = 0;
    std::vector<Eigen::VectorXd> m;  // flat, aligned with the parameter registry
    std::vector<Eigen::VectorXd> v;
};

struct ModelState {
    EmbeddingState embeddings;
    EncoderParams encoder;
    PriorParams prior;
    AdamState adam;
    int epoch = 0;
    std::vector<std::vector<int>> uwe_snapshot;  // per-slice unassociated word ids
    std::uint64_t vocab_hash = 0;
    TrainConfig config;

    ModelParamsView params_view() const;
};

// Flat named views over every trainable tensor, in a fixed order shared by
// the optimizer and the checkpoint format.
struct TensorRef {
    std::string name;
    double* data;
    Eigen::Index size;
};
std::vector<TensorRef> parameter_tensors(EmbeddingState& emb, EncoderParams& enc);
std::vector<TensorRef> gradient_tensors(ModelGrads& grads);

ModelState init_model(const TimeSlicedCorpus& corpus, const TrainConfig& cfg);

struct EpochStats {
    int epoch;
    LossBreakdown mean_losses;  // per-step means across the epoch
};

// Runs the full loop: per-epoch UWE refresh, shuffled mixed-slice batches,
// Adam updates. Deterministic given (corpus, cfg.seed, cfg).
ModelState train(const TimeSlicedCorpus& corpus, const TrainConfig& cfg,
                 const std::function<void(const EpochStats&)>& on_epoch = nullptr,
                 const std::function<void(const ModelState&)>& on_checkpoint = nullptr);

// Posterior-mean doc-topic distributions: theta = softmax(mu), no sampling.
Eigen::MatrixXd infer_theta(const ModelState& state, const std::vector<BatchDoc>& docs);

// Topic-word distribution of slice t; in masking mode the columns of the
// slice's unassociated words are zeroed first.
Eigen::MatrixXd export_beta(const ModelState& state, const TimeSlicedCorpus& corpus, int t);

struct TopicWords {
    int slice = 0;
    int topic = 0;
    std::vector<int> word_ids;
    std::vector<double> scores;
};
std::vector<TopicWords> export_topics(const ModelState& state, const TimeSlicedCorpus& corpus,
                                      int n_words);

// Row t holds beta^(t)[topic_id, word] for each requested word.
Eigen::MatrixXd export_word_evolution(const ModelState& state, const TimeSlicedCorpus& corpus,
                                      const std::vector<int>& word_ids, int topic_id);

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace cfdtm
