#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cfdtm/corpus.hpp"
#include "cfdtm/trainer.hpp"

namespace cfdtm {

struct EvalReport {
    std::vector<double> tc_per_slice;
    std::vector<double> td_per_slice;
    double tc_avg = 0.0;
    double td_avg = 0.0;
    bool has_downstream = false;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double purity = 0.0;
    double nmi = 0.0;
};

// C_V topic coherence against a reference corpus: boolean sliding windows
// estimate word and pair probabilities, each top word is paired with the
// full top-word set, context vectors hold smoothed NPMI values, and the
// confirmation is the cosine between a word's vector and the set's sum.
// Topics with fewer than two in-reference words are skipped with a warning;
// throws if every topic is skipped.
double topic_coherence_cv(const std::vector<std::vector<std::string>>& topic_top_words,
                          const std::vector<std::vector<std::string>>& reference_docs,
                          int window = 110);

// Fraction of the K*n top-word occurrences at a slice that occur exactly
// once across all K lists and belong to the slice vocabulary.
double topic_diversity(const std::vector<std::vector<int>>& topic_top_words,
                       const std::vector<int>& v_slice);

// Per-slice TC against the slice's reference token streams and TD against
// the slice vocabulary, plus their averages.
EvalReport evaluate_dynamic_topics(const ModelState& state, const TimeSlicedCorpus& corpus,
                                   int n_words);

// Macro-averaged F1 over the classes present in y_true or y_pred; a class
// with zero precision+recall contributes zero.
double macro_f1_score(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Linear max-margin one-vs-rest classifier on doc-topic features.
// Returns (accuracy, macro-F1).
std::pair<double, double> classify_doc_topics(const Eigen::MatrixXd& theta_train,
                                              const std::vector<int>& labels_train,
                                              const Eigen::MatrixXd& theta_test,
                                              const std::vector<int>& labels_test);

// Clusters documents by their argmax topic (ties toward the lower index).
// NMI normalizes mutual information by the arithmetic mean of entropies;
// a zero-entropy partition yields NMI 0.
std::pair<double, double> cluster_purity_nmi(const Eigen::MatrixXd& theta,
                                             const std::vector<int>& labels);

// "name <TAB> slice-or-avg <TAB> value" lines.
void write_eval_report_text(const EvalReport& report, std::ostream& out);
nlohmann::json eval_report_to_json(const EvalReport& report);

}  // namespace cfdtm
