#include "cfdtm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace cfdtm {

namespace {

constexpr double kNpmiEps = 1e-12;

struct WindowCounts {
    std::vector<long long> singles;
    std::vector<long long> joint;  // dense m x m, row-major
    long long total_windows = 0;
    int m = 0;

    long long& pair(int i, int j) { return joint[static_cast<std::size_t>(i) * m + j]; }
    long long pair(int i, int j) const { return joint[static_cast<std::size_t>(i) * m + j]; }
};

// Boolean sliding window of fixed size; documents shorter than the window
// contribute a single window covering the whole document.
WindowCounts count_windows(const std::vector<std::vector<std::string>>& docs,
                           const std::unordered_map<std::string, int>& target_ids, int window) {
    WindowCounts wc;
    wc.m = static_cast<int>(target_ids.size());
    wc.singles.assign(static_cast<std::size_t>(wc.m), 0);
    wc.joint.assign(static_cast<std::size_t>(wc.m) * wc.m, 0);

    std::vector<int> stream;
    std::vector<int> in_window_count(static_cast<std::size_t>(wc.m), 0);
    std::vector<int> present;
    for (const auto& doc : docs) {
        stream.clear();
        stream.reserve(doc.size());
        for (const auto& tok : doc) {
            auto it = target_ids.find(tok);
            stream.push_back(it == target_ids.end() ? -1 : it->second);
        }
        if (stream.empty()) continue;
        const int len = static_cast<int>(stream.size());
        const int win = std::min(window, len);
        const int num_windows = len - win + 1;

        std::fill(in_window_count.begin(), in_window_count.end(), 0);
        for (int i = 0; i < win; ++i) {
            if (stream[static_cast<std::size_t>(i)] >= 0) {
                ++in_window_count[static_cast<std::size_t>(stream[static_cast<std::size_t>(i)])];
            }
        }
        for (int start = 0; start < num_windows; ++start) {
            present.clear();
            for (int id = 0; id < wc.m; ++id) {
                if (in_window_count[static_cast<std::size_t>(id)] > 0) present.push_back(id);
            }
            for (std::size_t a = 0; a < present.size(); ++a) {
                ++wc.singles[static_cast<std::size_t>(present[a])];
                for (std::size_t b = a + 1; b < present.size(); ++b) {
                    ++wc.pair(present[a], present[b]);
                    ++wc.pair(present[b], present[a]);
                }
            }
            ++wc.total_windows;
            if (start + 1 < num_windows) {
                const int leaving = stream[static_cast<std::size_t>(start)];
                const int entering = stream[static_cast<std::size_t>(start + win)];
                if (leaving >= 0) --in_window_count[static_cast<std::size_t>(leaving)];
                if (entering >= 0) ++in_window_count[static_cast<std::size_t>(entering)];
            }
        }
    }
    return wc;
}

double npmi(const WindowCounts& wc, int i, int j) {
    const double total = static_cast<double>(wc.total_windows);
    const double p_i = static_cast<double>(wc.singles[static_cast<std::size_t>(i)]) / total;
    const double p_j = static_cast<double>(wc.singles[static_cast<std::size_t>(j)]) / total;
    const double p_ij =
        (i == j ? static_cast<double>(wc.singles[static_cast<std::size_t>(i)])
                : static_cast<double>(wc.pair(i, j))) /
        total;
    const double pmi = std::log((p_ij + kNpmiEps) / (p_i * p_j));
    const double denom = -std::log(p_ij + kNpmiEps);
    return pmi / denom;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

}  // namespace

double topic_coherence_cv(const std::vector<std::vector<std::string>>& topic_top_words,
                          const std::vector<std::vector<std::string>>& reference_docs,
                          int window) {
    if (window < 1) throw std::invalid_argument("topic_coherence_cv: window must be >= 1");
    if (topic_top_words.empty()) {
        throw std::invalid_argument("topic_coherence_cv: no topics given");
    }

    std::set<std::string> reference_vocab;
    for (const auto& doc : reference_docs) {
        reference_vocab.insert(doc.begin(), doc.end());
    }

    // Keep per-topic words that exist in the reference corpus; the union of
    // the survivors is the target set for window counting.
    std::vector<std::vector<std::string>> kept(topic_top_words.size());
    std::unordered_map<std::string, int> target_ids;
    for (std::size_t k = 0; k < topic_top_words.size(); ++k) {
        for (const auto& w : topic_top_words[k]) {
            if (reference_vocab.count(w) != 0) {
                kept[k].push_back(w);
                target_ids.emplace(w, static_cast<int>(target_ids.size()));
            }
        }
    }

    int usable = 0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (kept[k].size() >= 2) {
            ++usable;
        } else {
            std::cerr << "[coherence] topic " << k
                      << " has fewer than 2 in-reference top words; skipped\n";
        }
    }
    if (usable == 0) {
        throw std::runtime_error("topic_coherence_cv: every topic lacks in-reference words");
    }

    const WindowCounts wc = count_windows(reference_docs, target_ids, window);
    if (wc.total_windows == 0) {
        throw std::runtime_error("topic_coherence_cv: reference corpus is empty");
    }

    double coherence_sum = 0.0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
        if (kept[k].size() < 2) continue;
        const int n = static_cast<int>(kept[k].size());
        std::vector<int> ids(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = target_ids.at(kept[k][i]);

        // One context vector per word over the topic's own word set.
        Eigen::MatrixXd vectors(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                vectors(i, j) = npmi(wc, ids[static_cast<std::size_t>(i)],
                                     ids[static_cast<std::size_t>(j)]);
            }
        }
        const Eigen::VectorXd set_vector = vectors.colwise().sum().transpose();
        double topic_score = 0.0;
        for (int i = 0; i < n; ++i) {
            topic_score += cosine(vectors.row(i).transpose(), set_vector);
        }
        coherence_sum += topic_score / n;
    }
    return coherence_sum / usable;
}

double topic_diversity(const std::vector<std::vector<int>>& topic_top_words,
                       const std::vector<int>& v_slice) {
    if (topic_top_words.empty()) throw std::invalid_argument("topic_diversity: no topics");
    const std::size_t n = topic_top_words.front().size();
    if (n == 0) throw std::invalid_argument("topic_diversity: empty top-word list");
    for (const auto& list : topic_top_words) {
        if (list.size() != n) {
            throw std::invalid_argument("topic_diversity: lists must have equal length");
        }
    }
    std::unordered_map<int, int> occurrence;
    for (const auto& list : topic_top_words) {
        for (int w : list) ++occurrence[w];
    }
    const std::set<int> slice_words(v_slice.begin(), v_slice.end());
    long long unique_and_present = 0;
    for (const auto& list : topic_top_words) {
        for (int w : list) {
            if (occurrence.at(w) == 1 && slice_words.count(w) != 0) ++unique_and_present;
        }
    }
    return static_cast<double>(unique_and_present) /
           static_cast<double>(topic_top_words.size() * n);
}

EvalReport evaluate_dynamic_topics(const ModelState& state, const TimeSlicedCorpus& corpus,
                                   int n_words) {
    if (n_words < 1 || n_words > corpus.vocab.size()) {
        throw std::invalid_argument("evaluate_dynamic_topics: n_words must be in [1, |V|]");
    }
    EvalReport report;
    const int T = corpus.num_slices();
    report.tc_per_slice.resize(static_cast<std::size_t>(T));
    report.td_per_slice.resize(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
        const Eigen::MatrixXd beta = export_beta(state, corpus, t);
        const auto top_ids = top_words_per_topic(beta, n_words);
        std::vector<std::vector<std::string>> top_tokens(top_ids.size());
        for (std::size_t k = 0; k < top_ids.size(); ++k) {
            for (int id : top_ids[k]) top_tokens[k].push_back(corpus.vocab.token(id));
        }
        const auto& slice = corpus.slices[static_cast<std::size_t>(t)];
        report.tc_per_slice[static_cast<std::size_t>(t)] =
            topic_coherence_cv(top_tokens, slice.reference_tokens);
        report.td_per_slice[static_cast<std::size_t>(t)] =
            topic_diversity(top_ids, slice.vocabulary);
    }
    report.tc_avg = std::accumulate(report.tc_per_slice.begin(), report.tc_per_slice.end(), 0.0) /
                    static_cast<double>(T);
    report.td_avg = std::accumulate(report.td_per_slice.begin(), report.td_per_slice.end(), 0.0) /
                    static_cast<double>(T);
    return report;
}

namespace {

// Full-batch subgradient descent on the primal hinge objective
// lambda/2 ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b)), one-vs-rest.
class LinearSvm {
public:
    LinearSvm(const Eigen::MatrixXd& features, const std::vector<int>& binary_labels)
        : w_(Eigen::VectorXd::Zero(features.cols())), b_(0.0) {
        constexpr double kLambda = 1e-3;
        constexpr int kIters = 4000;
        const auto n = features.rows();
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i) = binary_labels[static_cast<std::size_t>(i)];
        for (int iter = 1; iter <= kIters; ++iter) {
            const Eigen::VectorXd scores = ((features * w_).array() + b_).matrix();
            const Eigen::VectorXd margins = y.cwiseProduct(scores);
            Eigen::VectorXd grad_w = kLambda * w_;
            double grad_b = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (margins(i) < 1.0) {
                    grad_w -= (y(i) / static_cast<double>(n)) * features.row(i).transpose();
                    grad_b -= y(i) / static_cast<double>(n);
                }
            }
            const double lr = 1.0 / (kLambda * (static_cast<double>(iter) + 100.0));
            w_ -= lr * grad_w;
            b_ -= lr * grad_b;
        }
    }

    double score(const Eigen::VectorXd& x) const { return w_.dot(x) + b_; }

private:
    Eigen::VectorXd w_;
    double b_;
};

double entropy(const std::vector<long long>& counts, long long total) {
    double h = 0.0;
    for (long long c : counts) {
        if (c > 0) {
            const double p = static_cast<double>(c) / static_cast<double>(total);
            h -= p * std::log(p);
        }
    }
    return h;
}

}  // namespace

std::pair<double, double> classify_doc_topics(const Eigen::MatrixXd& theta_train,
                                              const std::vector<int>& labels_train,
                                              const Eigen::MatrixXd& theta_test,
                                              const std::vector<int>& labels_test) {
    if (theta_train.rows() != static_cast<Eigen::Index>(labels_train.size()) ||
        theta_test.rows() != static_cast<Eigen::Index>(labels_test.size())) {
        throw std::invalid_argument("classify_doc_topics: feature/label size mismatch");
    }
    if (theta_train.rows() == 0 || theta_test.rows() == 0) {
        throw std::invalid_argument("classify_doc_topics: empty train or test set");
    }
    std::vector<int> classes(labels_train);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) {
        throw std::invalid_argument("classify_doc_topics: training set has a single class");
    }

    std::vector<LinearSvm> models;
    models.reserve(classes.size());
    std::vector<int> binary(labels_train.size());
    for (int cls : classes) {
        for (std::size_t i = 0; i < labels_train.size(); ++i) {
            binary[i] = labels_train[i] == cls ? 1 : -1;
        }
        models.emplace_back(theta_train, binary);
    }

    std::vector<int> predictions(static_cast<std::size_t>(theta_test.rows()));
    for (Eigen::Index i = 0; i < theta_test.rows(); ++i) {
        int best = classes.front();
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            const double s = models[c].score(theta_test.row(i).transpose());
            if (s > best_score) {
                best_score = s;
                best = classes[c];
            }
        }
        predictions[static_cast<std::size_t>(i)] = best;
    }

    long long correct = 0;
    for (std::size_t i = 0; i < labels_test.size(); ++i) {
        if (predictions[i] == labels_test[i]) ++correct;
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(labels_test.size());
    return {accuracy, macro_f1_score(labels_test, predictions)};
}

double macro_f1_score(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size() || y_true.empty()) {
        throw std::invalid_argument("macro_f1_score: label vectors must match and be nonempty");
    }
    std::set<int> classes(y_true.begin(), y_true.end());
    classes.insert(y_pred.begin(), y_pred.end());
    double f1_sum = 0.0;
    for (int cls : classes) {
        long long tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < y_true.size(); ++i) {
            const bool truth = y_true[i] == cls;
            const bool pred = y_pred[i] == cls;
            if (truth && pred) ++tp;
            if (!truth && pred) ++fp;
            if (truth && !pred) ++fn;
        }
        const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return f1_sum / static_cast<double>(classes.size());
}

std::pair<double, double> cluster_purity_nmi(const Eigen::MatrixXd& theta,
                                             const std::vector<int>& labels) {
    if (theta.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty()) {
        throw std::invalid_argument("cluster_purity_nmi: labels must match theta rows");
    }
    const auto n = theta.rows();
    std::vector<int> clusters(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        for (int k = 1; k < theta.cols(); ++k) {
            if (theta(i, k) > theta(i, best)) best = k;  // ties keep the lower index
        }
        clusters[static_cast<std::size_t>(i)] = best;
    }

    std::map<int, std::map<int, long long>> contingency;  // cluster -> label -> count
    std::map<int, long long> cluster_sizes;
    std::map<int, long long> label_sizes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++contingency[clusters[i]][labels[i]];
        ++cluster_sizes[clusters[i]];
        ++label_sizes[labels[i]];
    }

    long long purity_sum = 0;
    for (const auto& [cluster, label_counts] : contingency) {
        long long best = 0;
        for (const auto& [label, count] : label_counts) best = std::max(best, count);
        purity_sum += best;
    }
    const double purity = static_cast<double>(purity_sum) / static_cast<double>(n);

    std::vector<long long> cluster_counts, label_counts;
    for (const auto& [c, v] : cluster_sizes) cluster_counts.push_back(v);
    for (const auto& [l, v] : label_sizes) label_counts.push_back(v);
    const double h_cluster = entropy(cluster_counts, n);
    const double h_label = entropy(label_counts, n);
    double nmi = 0.0;
    if (h_cluster > 0.0 && h_label > 0.0) {
        double mutual = 0.0;
        for (const auto& [cluster, per_label] : contingency) {
            for (const auto& [label, count] : per_label) {
                const double p_cl = static_cast<double>(count) / static_cast<double>(n);
                const double p_c =
                    static_cast<double>(cluster_sizes[cluster]) / static_cast<double>(n);
                const double p_l = static_cast<double>(label_sizes[label]) / static_cast<double>(n);
                mutual += p_cl * std::log(p_cl / (p_c * p_l));
            }
        }
        nmi = mutual / (0.5 * (h_cluster + h_label));
    }
    return {purity, nmi};
}

void write_eval_report_text(const EvalReport& report, std::ostream& out) {
    for (std::size_t t = 0; t < report.tc_per_slice.size(); ++t) {
        out << "tc\t" << t << "\t" << report.tc_per_slice[t] << "\n";
    }
    for (std::size_t t = 0; t < report.td_per_slice.size(); ++t) {
        out << "td\t" << t << "\t" << report.td_per_slice[t] << "\n";
    }
    out << "tc\tavg\t" << report.tc_avg << "\n";
    out << "td\tavg\t" << report.td_avg << "\n";
    if (report.has_downstream) {
        out << "accuracy\tavg\t" << report.accuracy << "\n";
        out << "macro_f1\tavg\t" << report.macro_f1 << "\n";
        out << "purity\tavg\t" << report.purity << "\n";
        out << "nmi\tavg\t" << report.nmi << "\n";
    }
}

nlohmann::json eval_report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["tc_per_slice"] = report.tc_per_slice;
    j["td_per_slice"] = report.td_per_slice;
    j["tc_avg"] = report.tc_avg;
    j["td_avg"] = report.td_avg;
    if (report.has_downstream) {
        j["accuracy"] = report.accuracy;
        j["macro_f1"] = report.macro_f1;
        j["purity"] = report.purity;
        j["nmi"] = report.nmi;
    }
    return j;
}

}  // namespace cfdtm
