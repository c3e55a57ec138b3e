// Command-line front end: preprocess raw JSON-lines corpora into bundles,
// train the dynamic topic model, evaluate it, infer doc-topic rows, and
// export topics / word-evolution tables / raw embeddings.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfdtm/corpus.hpp"
#include "cfdtm/evaluation.hpp"
#include "cfdtm/objectives.hpp"
#include "cfdtm/trainer.hpp"
#include "cfdtm/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string u64_hex(std::uint64_t v) {
    std::ostringstream oss;
    oss << std::hex << v;
    return oss.str();
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = cfdtm::fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
        if (!in) break;
    }
    return h;
}

// Every command writes its manifest before any real work starts.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& config,
                    const std::string& corpus_hash, std::uint64_t seed) {
    fs::create_directories(out_dir);
    json manifest;
    manifest["command"] = command;
    manifest["config"] = config;
    manifest["corpus_hash"] = corpus_hash;
    manifest["seed"] = seed;
    manifest["output_dir"] = out_dir.string();
    manifest["started_at"] = iso_utc_now();
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

void check_vocab_hash(const cfdtm::ModelState& state, const cfdtm::TimeSlicedCorpus& corpus,
                      const std::string& checkpoint_path) {
    if (state.vocab_hash != corpus.vocab.hash()) {
        throw std::runtime_error(
            "vocabulary hash mismatch: checkpoint " + checkpoint_path + " was trained on hash 0x" +
            u64_hex(state.vocab_hash) + " but the corpus bundle has hash 0x" +
            u64_hex(corpus.vocab.hash()) + "; refusing to continue");
    }
}

std::ostream& full_precision(std::ostream& os) {
    os << std::setprecision(17);
    return os;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
    std::string input;
    std::string output;
    std::uint64_t seed = 0;
    int max_vocab = 10000;
    int min_df = 1;
    std::string stopword_file;
    std::string slice_map_file;
};

void run_preprocess(const PreprocessArgs& args) {
    json cfg_echo = {{"input", args.input},
                     {"max_vocab", args.max_vocab},
                     {"min_df", args.min_df},
                     {"stopword_file", args.stopword_file},
                     {"slice_map_file", args.slice_map_file}};
    write_manifest(args.output, "preprocess", cfg_echo, u64_hex(hash_file(args.input)), args.seed);

    const auto docs = cfdtm::read_jsonl(args.input);
    if (docs.empty()) throw std::runtime_error("input file has no documents: " + args.input);

    cfdtm::CorpusOptions opts;
    opts.max_vocab = args.max_vocab;
    opts.min_df = args.min_df;
    if (!args.slice_map_file.empty()) opts.slice_map = cfdtm::load_slice_map(args.slice_map_file);
    const auto stopwords = args.stopword_file.empty()
                               ? cfdtm::default_stopwords()
                               : cfdtm::load_stopword_file(args.stopword_file);

    const auto corpus = cfdtm::build_corpus(docs, opts, stopwords);
    cfdtm::save_corpus_bundle(corpus, args.output);

    double token_total = 0.0;
    for (const auto& slice : corpus.slices) {
        for (const auto& doc : slice.documents) token_total += doc.total;
    }
    const auto n_docs = corpus.total_documents();
    std::cout << "#docs\tavg_length\tvocab_size\t#slices\n";
    std::cout << n_docs << "\t" << std::fixed << std::setprecision(1)
              << token_total / static_cast<double>(n_docs) << "\t" << corpus.vocab.size() << "\t"
              << corpus.num_slices() << "\n";
    std::cout.unsetf(std::ios::fixed);
    for (int t = 0; t < corpus.num_slices(); ++t) {
        const auto& slice = corpus.slices[static_cast<std::size_t>(t)];
        std::cout << "slice " << t << " (" << slice.key << "): " << slice.num_documents()
                  << " docs, |V^(t)| = " << slice.vocabulary.size() << "\n";
    }
    std::cout << "bundle written to " << args.output << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string input;
    std::string output;
    cfdtm::TrainConfig cfg;
    double lambda_t = 1.0;
    std::vector<double> lambda_sweep;
};

void write_resolved_config(const TrainArgs& args, const fs::path& path) {
    std::ofstream out(path);
    out << full_precision;
    out << "input=" << args.input << "\n";
    out << "num-topics=" << args.cfg.num_topics << "\n";
    out << "epochs=" << args.cfg.epochs << "\n";
    out << "lr=" << args.cfg.learning_rate << "\n";
    out << "batch-size=" << args.cfg.batch_size << "\n";
    out << "seed=" << args.cfg.seed << "\n";
    out << "hidden=" << args.cfg.hidden << "\n";
    out << "embedding-dim=" << args.cfg.embedding_dim << "\n";
    out << "tau=" << args.cfg.loss.tau << "\n";
    out << "pi=" << args.cfg.loss.pi << "\n";
    out << "gamma=" << args.cfg.loss.gamma << "\n";
    out << "lambda-t=" << args.lambda_t << "\n";
    out << "lambda-uwe=" << args.cfg.loss.lambda_uwe << "\n";
    out << "n-top=" << args.cfg.loss.n_top << "\n";
    out << "no-etc=" << (args.cfg.loss.enable_etc ? "false" : "true") << "\n";
    out << "no-negative=" << (args.cfg.loss.enable_negative ? "false" : "true") << "\n";
    out << "no-uwe=" << (args.cfg.loss.enable_uwe ? "false" : "true") << "\n";
    out << "uwe-masking=" << (args.cfg.loss.uwe_masking_mode ? "true" : "false") << "\n";
    out << "normalize-counts=" << (args.cfg.normalize_counts ? "true" : "false") << "\n";
    out << "freeze-word-embeddings=" << (args.cfg.freeze_word_embeddings ? "true" : "false")
        << "\n";
    out << "checkpoint-every=" << args.cfg.checkpoint_every << "\n";
    if (!args.cfg.glove_path.empty()) out << "glove-path=" << args.cfg.glove_path << "\n";
}

// One full training run into out_dir; returns the final state.
cfdtm::ModelState train_single(const cfdtm::TimeSlicedCorpus& corpus, const TrainArgs& args,
                               const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_resolved_config(args, out_dir / "resolved.cfg");

    std::ofstream log(out_dir / "train.log");
    log << full_precision;
    const int report_every = std::max(1, args.cfg.epochs / 10);
    auto on_epoch = [&](const cfdtm::EpochStats& stats) {
        log << stats.epoch << "\t" << stats.mean_losses.tm << "\t" << stats.mean_losses.pos << "\t"
            << stats.mean_losses.neg << "\t" << stats.mean_losses.uwe << "\t"
            << stats.mean_losses.total() << "\n";
        if (stats.epoch % report_every == 0 || stats.epoch + 1 == args.cfg.epochs) {
            std::cout << "epoch " << stats.epoch << "  total " << stats.mean_losses.total()
                      << "\n";
        }
    };
    auto on_checkpoint = [&](const cfdtm::ModelState& state) {
        std::ostringstream name;
        name << "checkpoint_epoch_" << std::setw(4) << std::setfill('0') << state.epoch << ".ckpt";
        cfdtm::save_checkpoint(state, (out_dir / name.str()).string());
    };

    const auto state = cfdtm::train(corpus, args.cfg, on_epoch, on_checkpoint);
    cfdtm::save_checkpoint(state, (out_dir / "checkpoint.ckpt").string());
    return state;
}

void run_train(const TrainArgs& args_in) {
    TrainArgs args = args_in;
    const auto corpus = cfdtm::load_corpus_bundle(args.input);
    args.cfg.loss.lambda_schedule.assign(static_cast<std::size_t>(corpus.num_slices()),
                                         args.lambda_t);
    args.cfg.validate();

    json cfg_echo = cfdtm::train_config_to_json(args.cfg);
    cfg_echo["input"] = args.input;
    cfg_echo["lambda_sweep"] = args.lambda_sweep;
    write_manifest(args.output, "train", cfg_echo, u64_hex(corpus.vocab.hash()), args.cfg.seed);

    if (args.lambda_sweep.empty()) {
        train_single(corpus, args, args.output);
        std::cout << "checkpoint written to " << (fs::path(args.output) / "checkpoint.ckpt")
                  << "\n";
        return;
    }

    // One training per lambda value; the report grows incrementally so a
    // failing run preserves everything finished before it.
    const fs::path report_path = fs::path(args.output) / "sweep_report.tsv";
    std::ofstream report(report_path);
    report << full_precision << "lambda\ttc_avg\ttd_avg\n";
    report.flush();
    for (double lambda : args.lambda_sweep) {
        TrainArgs sub = args;
        sub.lambda_t = lambda;
        sub.cfg.loss.lambda_schedule.assign(static_cast<std::size_t>(corpus.num_slices()), lambda);
        std::ostringstream dir_name;
        dir_name << "sweep_lambda_" << lambda;
        const fs::path sub_dir = fs::path(args.output) / dir_name.str();
        std::cout << "[sweep] lambda^(t) = " << lambda << "\n";
        const auto state = train_single(corpus, sub, sub_dir);
        const auto eval = cfdtm::evaluate_dynamic_topics(
            state, corpus, std::min(sub.cfg.loss.n_top, corpus.vocab.size()));
        report << lambda << "\t" << eval.tc_avg << "\t" << eval.td_avg << "\n";
        report.flush();
    }
    std::cout << "sweep report written to " << report_path << "\n";
}

// ---------------------------------------------------------------------------
// eval / infer / export

struct CheckpointArgs {
    std::string input;
    std::string output;
    std::string checkpoint;
    int top_words = 15;
    int evolution_topic = 0;
    std::vector<std::string> evolution_words;
};

std::vector<cfdtm::BatchDoc> all_docs_of(const cfdtm::TimeSlicedCorpus& corpus) {
    std::vector<cfdtm::BatchDoc> docs;
    for (int t = 0; t < corpus.num_slices(); ++t) {
        for (const auto& doc : corpus.slices[static_cast<std::size_t>(t)].documents) {
            docs.push_back({&doc, t});
        }
    }
    return docs;
}

void run_eval(const CheckpointArgs& args) {
    const auto corpus = cfdtm::load_corpus_bundle(args.input);
    json cfg_echo = {{"input", args.input},
                     {"checkpoint", args.checkpoint},
                     {"top_words", args.top_words}};
    write_manifest(args.output, "eval", cfg_echo, u64_hex(corpus.vocab.hash()), 0);

    const auto state = cfdtm::load_checkpoint(args.checkpoint);
    check_vocab_hash(state, corpus, args.checkpoint);

    auto report = cfdtm::evaluate_dynamic_topics(state, corpus, args.top_words);

    if (corpus.has_labels()) {
        const auto docs = all_docs_of(corpus);
        const auto theta = cfdtm::infer_theta(state, docs);
        std::vector<int> labels;
        std::map<std::string, int> label_ids;
        for (const auto& slice : corpus.slices) {
            for (const auto& label : slice.labels) {
                labels.push_back(
                    label_ids.emplace(label, static_cast<int>(label_ids.size())).first->second);
            }
        }
        // Deterministic held-out split: every fifth document is test.
        std::vector<int> train_rows, test_rows;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            (i % 5 == 0 ? test_rows : train_rows).push_back(static_cast<int>(i));
        }
        auto subset = [&](const std::vector<int>& rows, Eigen::MatrixXd& m, std::vector<int>& l) {
            m.resize(static_cast<Eigen::Index>(rows.size()), theta.cols());
            l.clear();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                m.row(static_cast<Eigen::Index>(i)) = theta.row(rows[i]);
                l.push_back(labels[static_cast<std::size_t>(rows[i])]);
            }
        };
        Eigen::MatrixXd theta_train, theta_test;
        std::vector<int> labels_train, labels_test;
        subset(train_rows, theta_train, labels_train);
        subset(test_rows, theta_test, labels_test);

        const auto [acc, f1] =
            cfdtm::classify_doc_topics(theta_train, labels_train, theta_test, labels_test);
        const auto [purity, nmi] = cfdtm::cluster_purity_nmi(theta, labels);
        report.has_downstream = true;
        report.accuracy = acc;
        report.macro_f1 = f1;
        report.purity = purity;
        report.nmi = nmi;
    }

    {
        std::ofstream out(fs::path(args.output) / "eval_report.txt");
        out << full_precision;
        cfdtm::write_eval_report_text(report, out);
    }
    {
        std::ofstream out(fs::path(args.output) / "eval_report.json");
        out << cfdtm::eval_report_to_json(report).dump(2) << "\n";
    }
    cfdtm::write_eval_report_text(report, std::cout);
}

void run_infer(const CheckpointArgs& args) {
    const auto corpus = cfdtm::load_corpus_bundle(args.input);
    json cfg_echo = {{"input", args.input}, {"checkpoint", args.checkpoint}};
    write_manifest(args.output, "infer", cfg_echo, u64_hex(corpus.vocab.hash()), 0);

    const auto state = cfdtm::load_checkpoint(args.checkpoint);
    check_vocab_hash(state, corpus, args.checkpoint);

    const auto docs = all_docs_of(corpus);
    const auto theta = cfdtm::infer_theta(state, docs);
    std::ofstream out(fs::path(args.output) / "theta.tsv");
    out << full_precision;
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
        for (Eigen::Index k = 0; k < theta.cols(); ++k) {
            if (k) out << "\t";
            out << theta(i, k);
        }
        out << "\n";
    }
    std::cout << "theta rows: " << theta.rows() << " -> " << (fs::path(args.output) / "theta.tsv")
              << "\n";
}

void run_export(const CheckpointArgs& args) {
    const auto corpus = cfdtm::load_corpus_bundle(args.input);
    json cfg_echo = {{"input", args.input},
                     {"checkpoint", args.checkpoint},
                     {"top_words", args.top_words},
                     {"evolution_topic", args.evolution_topic}};
    write_manifest(args.output, "export", cfg_echo, u64_hex(corpus.vocab.hash()), 0);

    const auto state = cfdtm::load_checkpoint(args.checkpoint);
    check_vocab_hash(state, corpus, args.checkpoint);
    const fs::path out_dir(args.output);

    {
        json topics = json::array();
        for (const auto& entry : cfdtm::export_topics(state, corpus, args.top_words)) {
            json item;
            item["slice"] = entry.slice;
            item["slice_key"] = corpus.slices[static_cast<std::size_t>(entry.slice)].key;
            item["topic"] = entry.topic;
            json words = json::array();
            for (std::size_t i = 0; i < entry.word_ids.size(); ++i) {
                words.push_back(
                    {{"word", corpus.vocab.token(entry.word_ids[i])}, {"score", entry.scores[i]}});
            }
            item["words"] = words;
            topics.push_back(std::move(item));
        }
        std::ofstream out(out_dir / "topics.json");
        out << topics.dump(2) << "\n";
    }

    {
        // Default trajectory: the chosen topic's current top words.
        std::vector<int> word_ids;
        if (args.evolution_words.empty()) {
            const auto beta = cfdtm::export_beta(state, corpus, corpus.num_slices() - 1);
            word_ids = cfdtm::top_words_per_topic(
                beta,
                std::min(args.top_words,
                         corpus.vocab.size()))[static_cast<std::size_t>(args.evolution_topic)];
        } else {
            for (const auto& token : args.evolution_words) {
                const int id = corpus.vocab.id_of(token);
                if (id < 0) throw std::runtime_error("word not in vocabulary: " + token);
                word_ids.push_back(id);
            }
        }
        const auto traj =
            cfdtm::export_word_evolution(state, corpus, word_ids, args.evolution_topic);
        std::ofstream out(out_dir / "word_evolution.tsv");
        out << full_precision << "word";
        for (int t = 0; t < corpus.num_slices(); ++t) {
            out << "\t" << corpus.slices[static_cast<std::size_t>(t)].key;
        }
        out << "\n";
        for (std::size_t w = 0; w < word_ids.size(); ++w) {
            out << corpus.vocab.token(word_ids[w]);
            for (int t = 0; t < corpus.num_slices(); ++t) {
                out << "\t" << traj(t, static_cast<Eigen::Index>(w));
            }
            out << "\n";
        }
    }

    {
        std::ofstream out(out_dir / "embeddings_words.tsv");
        out << full_precision;
        const auto& W = state.embeddings.word_embeddings;
        for (int i = 0; i < corpus.vocab.size(); ++i) {
            out << corpus.vocab.token(i);
            for (int d = 0; d < W.rows(); ++d) out << "\t" << W(d, i);
            out << "\n";
        }
    }
    {
        std::ofstream out(out_dir / "embeddings_topics.tsv");
        out << full_precision;
        for (int t = 0; t < corpus.num_slices(); ++t) {
            const auto& phi = state.embeddings.topic_embeddings[static_cast<std::size_t>(t)];
            for (int k = 0; k < phi.rows(); ++k) {
                out << t << "\t" << k;
                for (int d = 0; d < phi.cols(); ++d) out << "\t" << phi(k, d);
                out << "\n";
            }
        }
    }
    std::cout << "exports written to " << args.output << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chain-free dynamic topic modeling toolkit"};
    app.require_subcommand(1);

    PreprocessArgs pre_args;
    auto* pre = app.add_subcommand("preprocess", "build a time-sliced corpus bundle from JSONL");
    pre->set_config("--config");
    pre->add_option("--input", pre_args.input, "JSON-lines input file")->required();
    pre->add_option("--output", pre_args.output, "corpus bundle directory")->required();
    pre->add_option("--seed", pre_args.seed, "echoed into the manifest");
    pre->add_option("--max-vocab", pre_args.max_vocab, "vocabulary size cap");
    pre->add_option("--min-df", pre_args.min_df, "minimum document frequency");
    pre->add_option("--stopwords", pre_args.stopword_file, "stopword file (one word per line)");
    pre->add_option("--slice-map", pre_args.slice_map_file,
                    "timestamp<TAB>slice mapping file; default groups by timestamp");
    pre->callback([&] { run_preprocess(pre_args); });

    TrainArgs train_args;
    bool no_etc = false, no_negative = false, no_uwe = false, uwe_masking = false;
    auto* tr = app.add_subcommand("train", "train the model on a corpus bundle");
    tr->set_config("--config");
    tr->add_option("--input", train_args.input, "corpus bundle directory")->required();
    tr->add_option("--output", train_args.output, "run output directory")->required();
    tr->add_option("--seed", train_args.cfg.seed, "RNG seed (required for reproducibility)")
        ->required();
    tr->add_option("--num-topics", train_args.cfg.num_topics, "topics per slice (K)");
    tr->add_option("--epochs", train_args.cfg.epochs, "training epochs");
    tr->add_option("--lr", train_args.cfg.learning_rate, "Adam learning rate");
    tr->add_option("--batch-size", train_args.cfg.batch_size, "mini-batch size");
    tr->add_option("--hidden", train_args.cfg.hidden, "encoder hidden width");
    tr->add_option("--embedding-dim", train_args.cfg.embedding_dim, "embedding dimension D");
    tr->add_option("--tau", train_args.cfg.loss.tau, "similarity temperature");
    tr->add_option("--pi", train_args.cfg.loss.pi, "topic-word distance scale");
    tr->add_option("--gamma", train_args.cfg.loss.gamma, "negative-relation weight");
    tr->add_option("--lambda-t", train_args.lambda_t, "evolution intensity lambda^(t)");
    tr->add_option("--lambda-uwe", train_args.cfg.loss.lambda_uwe, "exclusion loss weight");
    tr->add_option("--n-top", train_args.cfg.loss.n_top, "top words per topic for UWE");
    tr->add_flag("--no-etc", no_etc, "disable evolution-tracking contrastive learning");
    tr->add_flag("--no-negative", no_negative, "drop the negative-relation term");
    tr->add_flag("--no-uwe", no_uwe, "disable unassociated word exclusion");
    tr->add_flag("--uwe-masking", uwe_masking, "mask unassociated words instead of excluding");
    tr->add_option("--lambda-sweep", train_args.lambda_sweep,
                   "comma-separated lambda values; one training per value")
        ->delimiter(',');
    tr->add_option("--glove-path", train_args.cfg.glove_path, "pretrained word vectors (text)");
    tr->add_flag("--freeze-word-embeddings", train_args.cfg.freeze_word_embeddings,
                 "keep word embeddings fixed");
    tr->add_flag("--normalize-counts", train_args.cfg.normalize_counts,
                 "feed the encoder normalized counts");
    tr->add_option("--checkpoint-every", train_args.cfg.checkpoint_every,
                   "write intermediate checkpoints every N epochs");
    tr->callback([&] {
        train_args.cfg.loss.enable_etc = !no_etc;
        train_args.cfg.loss.enable_negative = !no_negative;
        train_args.cfg.loss.enable_uwe = !no_uwe;
        train_args.cfg.loss.uwe_masking_mode = uwe_masking;
        run_train(train_args);
    });

    CheckpointArgs eval_args;
    auto* ev = app.add_subcommand("eval", "evaluate dynamic topic quality and downstream tasks");
    ev->set_config("--config");
    ev->add_option("--input", eval_args.input, "corpus bundle directory")->required();
    ev->add_option("--output", eval_args.output, "report directory")->required();
    ev->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint")->required();
    ev->add_option("--top-words", eval_args.top_words, "top words per topic for TC/TD");
    ev->callback([&] { run_eval(eval_args); });

    CheckpointArgs infer_args;
    auto* inf = app.add_subcommand("infer", "write doc-topic distributions for a bundle");
    inf->set_config("--config");
    inf->add_option("--input", infer_args.input, "corpus bundle directory")->required();
    inf->add_option("--output", infer_args.output, "output directory")->required();
    inf->add_option("--checkpoint", infer_args.checkpoint, "trained checkpoint")->required();
    inf->callback([&] { run_infer(infer_args); });

    CheckpointArgs export_args;
    auto* ex = app.add_subcommand("export", "export topics, word evolution, and embeddings");
    ex->set_config("--config");
    ex->add_option("--input", export_args.input, "corpus bundle directory")->required();
    ex->add_option("--output", export_args.output, "output directory")->required();
    ex->add_option("--checkpoint", export_args.checkpoint, "trained checkpoint")->required();
    ex->add_option("--top-words", export_args.top_words, "words per exported topic");
    ex->add_option("--evolution-topic", export_args.evolution_topic,
                   "topic index for the evolution table");
    ex->add_option("--evolution-words", export_args.evolution_words,
                   "comma-separated words to track (default: the topic's current top words)")
        ->delimiter(',');
    ex->callback([&] { run_export(export_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
