#include "cfdtm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cfdtm/util.hpp"

namespace cfdtm {

namespace {

// Stable sub-seeds so the initializers and the training stream never overlap.
constexpr std::uint64_t kWordSeedTag = 0x77656D62;   // "wemb"
constexpr std::uint64_t kTopicSeedTag = 0x74656D62;  // "temb"
constexpr std::uint64_t kEncSeedTag = 0x656E6370;    // "encp"
constexpr std::uint64_t kTrainSeedTag = 0x747261696E;

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(&tag), sizeof(tag)),
                   seed ^ 0x9E3779B97F4A7C15ULL);
}

std::vector<std::vector<int>> refresh_uwe_sets(const EmbeddingState& emb,
                                               const TimeSlicedCorpus& corpus,
                                               const LossConfig& loss) {
    std::vector<std::vector<int>> sets(static_cast<std::size_t>(corpus.num_slices()));
    const int n_top = std::min(loss.n_top, corpus.vocab.size());
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const Eigen::MatrixXd beta = topic_word_distribution(
            emb.topic_embeddings[static_cast<std::size_t>(t)], emb.word_embeddings, loss.pi);
        sets[static_cast<std::size_t>(t)] =
            unassociated_words(top_word_set(beta, n_top), corpus.slice_vocabulary(t));
    }
    return sets;
}

}  // namespace

void TrainConfig::validate() const {
    if (num_topics < 2) throw std::invalid_argument("TrainConfig: num_topics must be >= 2");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (hidden < 1) throw std::invalid_argument("TrainConfig: hidden must be >= 1");
    if (embedding_dim < 1) throw std::invalid_argument("TrainConfig: embedding_dim must be >= 1");
    if (checkpoint_every < 0) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
    loss.validate();
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{{"num_topics", cfg.num_topics},
                          {"epochs", cfg.epochs},
                          {"learning_rate", cfg.learning_rate},
                          {"batch_size", cfg.batch_size},
                          {"seed", cfg.seed},
                          {"hidden", cfg.hidden},
                          {"embedding_dim", cfg.embedding_dim},
                          {"normalize_counts", cfg.normalize_counts},
                          {"freeze_word_embeddings", cfg.freeze_word_embeddings},
                          {"checkpoint_every", cfg.checkpoint_every},
                          {"glove_path", cfg.glove_path},
                          {"tau", cfg.loss.tau},
                          {"pi", cfg.loss.pi},
                          {"lambda_schedule", cfg.loss.lambda_schedule},
                          {"gamma", cfg.loss.gamma},
                          {"lambda_uwe", cfg.loss.lambda_uwe},
                          {"n_top", cfg.loss.n_top},
                          {"enable_etc", cfg.loss.enable_etc},
                          {"enable_negative", cfg.loss.enable_negative},
                          {"enable_uwe", cfg.loss.enable_uwe},
                          {"uwe_masking_mode", cfg.loss.uwe_masking_mode}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.num_topics = j.at("num_topics").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.embedding_dim = j.at("embedding_dim").get<int>();
    cfg.normalize_counts = j.at("normalize_counts").get<bool>();
    cfg.freeze_word_embeddings = j.at("freeze_word_embeddings").get<bool>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
    cfg.glove_path = j.at("glove_path").get<std::string>();
    cfg.loss.tau = j.at("tau").get<double>();
    cfg.loss.pi = j.at("pi").get<double>();
    cfg.loss.lambda_schedule = j.at("lambda_schedule").get<std::vector<double>>();
    cfg.loss.gamma = j.at("gamma").get<double>();
    cfg.loss.lambda_uwe = j.at("lambda_uwe").get<double>();
    cfg.loss.n_top = j.at("n_top").get<int>();
    cfg.loss.enable_etc = j.at("enable_etc").get<bool>();
    cfg.loss.enable_negative = j.at("enable_negative").get<bool>();
    cfg.loss.enable_uwe = j.at("enable_uwe").get<bool>();
    cfg.loss.uwe_masking_mode = j.at("uwe_masking_mode").get<bool>();
    return cfg;
}

ModelParamsView ModelState::params_view() const {
    ModelParamsView view;
    view.word_embeddings = &embeddings.word_embeddings;
    view.topic_embeddings = &embeddings.topic_embeddings;
    view.encoder = &encoder;
    view.prior = prior;
    view.pi = config.loss.pi;
    view.normalize_counts = config.normalize_counts;
    return view;
}

std::vector<TensorRef> parameter_tensors(EmbeddingState& emb, EncoderParams& enc) {
    std::vector<TensorRef> refs;
    refs.push_back({"word_embeddings", emb.word_embeddings.data(), emb.word_embeddings.size()});
    for (std::size_t t = 0; t < emb.topic_embeddings.size(); ++t) {
        refs.push_back({"topic_embeddings_" + std::to_string(t), emb.topic_embeddings[t].data(),
                        emb.topic_embeddings[t].size()});
    }
    refs.push_back({"enc_w1", enc.w1.data(), enc.w1.size()});
    refs.push_back({"enc_b1", enc.b1.data(), enc.b1.size()});
    refs.push_back({"enc_w2", enc.w2.data(), enc.w2.size()});
    refs.push_back({"enc_b2", enc.b2.data(), enc.b2.size()});
    refs.push_back({"enc_wmu", enc.wmu.data(), enc.wmu.size()});
    refs.push_back({"enc_bmu", enc.bmu.data(), enc.bmu.size()});
    refs.push_back({"enc_wlv", enc.wlv.data(), enc.wlv.size()});
    refs.push_back({"enc_blv", enc.blv.data(), enc.blv.size()});
    return refs;
}

std::vector<TensorRef> gradient_tensors(ModelGrads& grads) {
    std::vector<TensorRef> refs;
    refs.push_back({"word_embeddings", grads.word.data(), grads.word.size()});
    for (std::size_t t = 0; t < grads.topics.size(); ++t) {
        refs.push_back({"topic_embeddings_" + std::to_string(t), grads.topics[t].data(),
                        grads.topics[t].size()});
    }
    auto& e = grads.encoder;
    refs.push_back({"enc_w1", e.w1.data(), e.w1.size()});
    refs.push_back({"enc_b1", e.b1.data(), e.b1.size()});
    refs.push_back({"enc_w2", e.w2.data(), e.w2.size()});
    refs.push_back({"enc_b2", e.b2.data(), e.b2.size()});
    refs.push_back({"enc_wmu", e.wmu.data(), e.wmu.size()});
    refs.push_back({"enc_bmu", e.bmu.data(), e.bmu.size()});
    refs.push_back({"enc_wlv", e.wlv.data(), e.wlv.size()});
    refs.push_back({"enc_blv", e.blv.data(), e.blv.size()});
    return refs;
}

ModelState init_model(const TimeSlicedCorpus& corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.num_slices() < 1) throw std::invalid_argument("init_model: corpus has no slices");

    ModelState state;
    state.config = cfg;
    state.vocab_hash = corpus.vocab.hash();
    state.prior = PriorParams::laplace_approximation(cfg.num_topics);
    state.embeddings.dim = cfg.embedding_dim;
    if (cfg.glove_path.empty()) {
        state.embeddings.word_embeddings = init_word_embeddings(
            corpus.vocab.size(), cfg.embedding_dim, sub_seed(cfg.seed, kWordSeedTag));
    } else {
        state.embeddings.word_embeddings = load_word_embeddings(
            cfg.glove_path, corpus.vocab, cfg.embedding_dim, sub_seed(cfg.seed, kWordSeedTag));
    }
    state.embeddings.topic_embeddings =
        init_topic_embeddings(corpus.num_slices(), cfg.num_topics, cfg.embedding_dim,
                              sub_seed(cfg.seed, kTopicSeedTag));
    state.encoder = EncoderParams::init(corpus.vocab.size(), cfg.hidden, cfg.num_topics,
                                        sub_seed(cfg.seed, kEncSeedTag));

    auto refs = parameter_tensors(state.embeddings, state.encoder);
    state.adam.m.resize(refs.size());
    state.adam.v.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        state.adam.m[i] = Eigen::VectorXd::Zero(refs[i].size);
        state.adam.v[i] = Eigen::VectorXd::Zero(refs[i].size);
    }
    state.uwe_snapshot.assign(static_cast<std::size_t>(corpus.num_slices()), {});
    return state;
}

ModelState train(const TimeSlicedCorpus& corpus, const TrainConfig& cfg,
                 const std::function<void(const EpochStats&)>& on_epoch,
                 const std::function<void(const ModelState&)>& on_checkpoint) {
    ModelState state = init_model(corpus, cfg);
    if (cfg.epochs == 0) return state;

    std::vector<BatchDoc> all_docs;
    for (int t = 0; t < corpus.num_slices(); ++t) {
        for (const auto& doc : corpus.slices[static_cast<std::size_t>(t)].documents) {
            all_docs.push_back({&doc, t});
        }
    }
    if (all_docs.empty()) throw std::invalid_argument("train: corpus has no documents");

    Rng rng(sub_seed(cfg.seed, kTrainSeedTag));
    std::vector<std::size_t> order(all_docs.size());
    ModelGrads grads;
    ModelParamsView view = state.params_view();
    grads.resize_like(view);
    auto param_refs = parameter_tensors(state.embeddings, state.encoder);
    auto grad_refs = gradient_tensors(grads);

    const int K = cfg.num_topics;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Refresh the unassociated-word snapshot from the current topics
        // before any step of this epoch.
        if (cfg.loss.enable_uwe) {
            state.uwe_snapshot = refresh_uwe_sets(state.embeddings, corpus, cfg.loss);
        }

        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);

        LossBreakdown epoch_sum;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<BatchDoc> batch;
            batch.reserve(end - start);
            std::vector<Eigen::VectorXd> eps;
            eps.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(all_docs[order[i]]);
                Eigen::VectorXd e(K);
                for (int k = 0; k < K; ++k) e(k) = rng.gaussian();
                eps.push_back(std::move(e));
            }

            grads.set_zero();
            const LossBreakdown losses =
                overall_loss(batch, view, cfg.loss, state.uwe_snapshot, eps, &grads);
            if (!std::isfinite(losses.total())) {
                std::ostringstream msg;
                msg << "train: non-finite loss at epoch " << epoch << " (tm=" << losses.tm
                    << " pos=" << losses.pos << " neg=" << losses.neg << " uwe=" << losses.uwe
                    << "); aborting";
                throw std::runtime_error(msg.str());
            }

            // Adam with bias correction; word embeddings may be frozen.
            ++state.adam.step;
            const double bc1 = 1.0 - std::pow(state.adam.beta1, static_cast<double>(state.adam.step));
            const double bc2 = 1.0 - std::pow(state.adam.beta2, static_cast<double>(state.adam.step));
            for (std::size_t p = 0; p < param_refs.size(); ++p) {
                if (cfg.freeze_word_embeddings && param_refs[p].name == "word_embeddings") continue;
                Eigen::Map<Eigen::ArrayXd> param(param_refs[p].data, param_refs[p].size);
                Eigen::Map<const Eigen::ArrayXd> grad(grad_refs[p].data, grad_refs[p].size);
                auto& m = state.adam.m[p];
                auto& v = state.adam.v[p];
                m.array() = state.adam.beta1 * m.array() + (1.0 - state.adam.beta1) * grad;
                v.array() = state.adam.beta2 * v.array() + (1.0 - state.adam.beta2) * grad.square();
                param -= cfg.learning_rate * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + state.adam.epsilon);
            }

            epoch_sum.tm += losses.tm;
            epoch_sum.pos += losses.pos;
            epoch_sum.neg += losses.neg;
            epoch_sum.uwe += losses.uwe;
            epoch_sum.uwe_weighted += losses.uwe_weighted;
            ++steps;
        }

        if (!state.embeddings.all_finite() || !state.encoder.all_finite()) {
            throw std::runtime_error("train: non-finite parameters after epoch " +
                                     std::to_string(epoch));
        }
        state.epoch = epoch + 1;

        if (on_epoch) {
            EpochStats stats;
            stats.epoch = epoch;
            const double inv = 1.0 / static_cast<double>(steps);
            stats.mean_losses.tm = epoch_sum.tm * inv;
            stats.mean_losses.pos = epoch_sum.pos * inv;
            stats.mean_losses.neg = epoch_sum.neg * inv;
            stats.mean_losses.uwe = epoch_sum.uwe * inv;
            stats.mean_losses.uwe_weighted = epoch_sum.uwe_weighted * inv;
            on_epoch(stats);
        }
        if (on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
            on_checkpoint(state);
        }
    }
    return state;
}

Eigen::MatrixXd infer_theta(const ModelState& state, const std::vector<BatchDoc>& docs) {
    Eigen::MatrixXd theta(static_cast<Eigen::Index>(docs.size()), state.config.num_topics);
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const EncoderForward fwd =
            encode(*docs[d].doc, state.encoder, state.config.normalize_counts);
        theta.row(static_cast<Eigen::Index>(d)) = softmax(fwd.mu).transpose();
    }
    return theta;
}

Eigen::MatrixXd export_beta(const ModelState& state, const TimeSlicedCorpus& corpus, int t) {
    if (t < 0 || t >= corpus.num_slices()) {
        throw std::out_of_range("export_beta: slice index out of range");
    }
    Eigen::MatrixXd beta =
        topic_word_distribution(state.embeddings.topic_embeddings[static_cast<std::size_t>(t)],
                                state.embeddings.word_embeddings, state.config.loss.pi);
    if (state.config.loss.uwe_masking_mode) {
        const int n_top = std::min(state.config.loss.n_top, corpus.vocab.size());
        const auto uw = unassociated_words(top_word_set(beta, n_top), corpus.slice_vocabulary(t));
        for (int word : uw) beta.col(word).setZero();
    }
    return beta;
}

std::vector<TopicWords> export_topics(const ModelState& state, const TimeSlicedCorpus& corpus,
                                      int n_words) {
    if (n_words < 1 || n_words > corpus.vocab.size()) {
        throw std::invalid_argument("export_topics: n_words must be in [1, |V|]");
    }
    std::vector<TopicWords> out;
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const Eigen::MatrixXd beta = export_beta(state, corpus, t);
        const auto per_topic = top_words_per_topic(beta, n_words);
        for (int k = 0; k < state.config.num_topics; ++k) {
            TopicWords entry;
            entry.slice = t;
            entry.topic = k;
            for (int id : per_topic[static_cast<std::size_t>(k)]) {
                // Masked words carry exactly-zero score and are not reported.
                if (state.config.loss.uwe_masking_mode && beta(k, id) == 0.0) continue;
                entry.word_ids.push_back(id);
                entry.scores.push_back(beta(k, id));
            }
            out.push_back(std::move(entry));
        }
    }
    return out;
}

Eigen::MatrixXd export_word_evolution(const ModelState& state, const TimeSlicedCorpus& corpus,
                                      const std::vector<int>& word_ids, int topic_id) {
    if (topic_id < 0 || topic_id >= state.config.num_topics) {
        throw std::invalid_argument("export_word_evolution: topic id out of range");
    }
    for (int id : word_ids) {
        if (id < 0 || id >= corpus.vocab.size()) {
            throw std::invalid_argument("export_word_evolution: word id out of range");
        }
    }
    Eigen::MatrixXd traj(corpus.num_slices(), static_cast<Eigen::Index>(word_ids.size()));
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const Eigen::MatrixXd beta = export_beta(state, corpus, t);
        for (std::size_t w = 0; w < word_ids.size(); ++w) {
            traj(t, static_cast<Eigen::Index>(w)) = beta(topic_id, word_ids[w]);
        }
    }
    return traj;
}

namespace {

constexpr char kCheckpointMagic[] = "CFDTMCKPT1\n";

std::string u64_hex(std::uint64_t v) {
    std::ostringstream oss;
    oss << std::hex << v;
    return oss.str();
}

std::uint64_t u64_from_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    // Header JSON + raw little-endian float64 payload in registry order,
    // parameters first, then Adam first and second moments.
    auto& mutable_state = const_cast<ModelState&>(state);
    auto refs = parameter_tensors(mutable_state.embeddings, mutable_state.encoder);

    nlohmann::json header;
    header["format"] = "cfdtm-checkpoint";
    header["version"] = 1;
    header["epoch"] = state.epoch;
    header["adam_step"] = state.adam.step;
    header["vocab_hash"] = u64_hex(state.vocab_hash);
    header["config"] = train_config_to_json(state.config);
    header["uwe_snapshot"] = state.uwe_snapshot;
    header["num_slices"] = static_cast<int>(state.embeddings.topic_embeddings.size());
    header["vocab_size"] = static_cast<int>(state.embeddings.word_embeddings.cols());
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& ref : refs) {
        tensors.push_back({{"name", ref.name}, {"size", ref.size}});
    }
    header["tensors"] = tensors;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    const std::string header_str = header.dump();
    const std::uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& ref : refs) {
        out.write(reinterpret_cast<const char*>(ref.data),
                  static_cast<std::streamsize>(ref.size * static_cast<Eigen::Index>(sizeof(double))));
    }
    for (const auto& m : state.adam.m) {
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(m.size() * static_cast<Eigen::Index>(sizeof(double))));
    }
    for (const auto& v : state.adam.v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * static_cast<Eigen::Index>(sizeof(double))));
    }
    if (!out) throw std::runtime_error("failed while writing checkpoint: " + path);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("not a cfdtm checkpoint: " + path);
    }
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    const nlohmann::json header = nlohmann::json::parse(header_str);
    if (header.at("format") != "cfdtm-checkpoint" || header.at("version") != 1) {
        throw std::runtime_error("unsupported checkpoint format tag in " + path);
    }

    const TrainConfig cfg = train_config_from_json(header.at("config"));
    const int num_slices = header.at("num_slices").get<int>();
    const int vocab_size = header.at("vocab_size").get<int>();

    ModelState state;
    state.config = cfg;
    state.epoch = header.at("epoch").get<int>();
    state.vocab_hash = u64_from_hex(header.at("vocab_hash").get<std::string>());
    state.uwe_snapshot = header.at("uwe_snapshot").get<std::vector<std::vector<int>>>();
    state.prior = PriorParams::laplace_approximation(cfg.num_topics);
    state.embeddings.dim = cfg.embedding_dim;
    state.embeddings.word_embeddings.resize(cfg.embedding_dim, vocab_size);
    state.embeddings.topic_embeddings.assign(
        static_cast<std::size_t>(num_slices),
        Eigen::MatrixXd::Zero(cfg.num_topics, cfg.embedding_dim));
    state.encoder.w1.resize(cfg.hidden, vocab_size);
    state.encoder.b1.resize(cfg.hidden);
    state.encoder.w2.resize(cfg.hidden, cfg.hidden);
    state.encoder.b2.resize(cfg.hidden);
    state.encoder.wmu.resize(cfg.num_topics, cfg.hidden);
    state.encoder.bmu.resize(cfg.num_topics);
    state.encoder.wlv.resize(cfg.num_topics, cfg.hidden);
    state.encoder.blv.resize(cfg.num_topics);

    auto refs = parameter_tensors(state.embeddings, state.encoder);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != refs.size()) {
        throw std::runtime_error("checkpoint tensor directory does not match layout: " + path);
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (tensors[i].at("name").get<std::string>() != refs[i].name ||
            tensors[i].at("size").get<Eigen::Index>() != refs[i].size) {
            throw std::runtime_error("checkpoint tensor mismatch at '" + refs[i].name + "' in " +
                                     path);
        }
        in.read(reinterpret_cast<char*>(refs[i].data),
                static_cast<std::streamsize>(refs[i].size *
                                             static_cast<Eigen::Index>(sizeof(double))));
    }
    state.adam.step = header.at("adam_step").get<long long>();
    state.adam.m.resize(refs.size());
    state.adam.v.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        state.adam.m[i].resize(refs[i].size);
        in.read(reinterpret_cast<char*>(state.adam.m[i].data()),
                static_cast<std::streamsize>(refs[i].size *
                                             static_cast<Eigen::Index>(sizeof(double))));
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        state.adam.v[i].resize(refs[i].size);
        in.read(reinterpret_cast<char*>(state.adam.v[i].data()),
                static_cast<std::streamsize>(refs[i].size *
                                             static_cast<Eigen::Index>(sizeof(double))));
    }
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path);
    return state;
}

}  // namespace cfdtm
