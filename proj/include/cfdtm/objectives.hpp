#pragma once

#include <vector>

#include <Eigen/Dense>

#include "cfdtm/corpus.hpp"
#include "cfdtm/model.hpp"

namespace cfdtm {

struct LossConfig {
    double tau = 0.1;  // similarity temperature
    double pi = 1.0;   // topic-word distance scale
    std::vector<double> lambda_schedule;  // lambda^(t) per slice; entry 0 unused
    double gamma = 1.0;
    double lambda_uwe = 1.0;
    int n_top = 15;
    bool enable_etc = true;
    bool enable_negative = true;
    bool enable_uwe = true;
    bool uwe_masking_mode = false;

    double lambda_at(int t) const {
        if (lambda_schedule.empty()) return 1.0;
        if (t < static_cast<int>(lambda_schedule.size())) {
            return lambda_schedule[static_cast<std::size_t>(t)];
        }
        return lambda_schedule.back();
    }
    void validate() const;
};

// Scaled cosine similarity cos(a, b) / tau. Throws on zero-norm inputs.
double similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tau);

// Pulls each topic toward its predecessor slice:
//   sum_{t>=1} sum_k -lambda^(t) g(phi_k^(t), phi_k^(t-1)); zero when T == 1.
double positive_loss(const std::vector<Eigen::MatrixXd>& phi, const LossConfig& cfg,
                     std::vector<Eigen::MatrixXd>* grad_phi = nullptr);

// Pushes topics within a slice apart:
//   gamma sum_t sum_k log sum_{k' != k} exp(g(phi_k^(t), phi_k'^(t))).
double negative_loss(const std::vector<Eigen::MatrixXd>& phi, const LossConfig& cfg,
                     std::vector<Eigen::MatrixXd>* grad_phi = nullptr);

// positive + negative, honoring enable_etc / enable_negative.
double etc_loss(const std::vector<Eigen::MatrixXd>& phi, const LossConfig& cfg,
                std::vector<Eigen::MatrixXd>* grad_phi = nullptr);

// Per-topic top-n word ids ranked by beta, ties broken by lower word index.
std::vector<std::vector<int>> top_words_per_topic(const Eigen::MatrixXd& beta, int n_top);

// Union of the per-topic top-n sets, sorted ascending.
std::vector<int> top_word_set(const Eigen::MatrixXd& beta, int n_top);

// v_top \ v_slice; both sorted ascending, result sorted ascending.
std::vector<int> unassociated_words(const std::vector<int>& v_top, const std::vector<int>& v_slice);

// Pushes topic embeddings away from unassociated-word embeddings:
//   sum_t sum_k log sum_{x in UW^(t)} exp(g(phi_k^(t), w_x)).
// Slices with an empty set contribute nothing; masking mode returns 0.
double uwe_loss(const std::vector<Eigen::MatrixXd>& phi, const Eigen::MatrixXd& W,
                const std::vector<std::vector<int>>& uw_sets, const LossConfig& cfg,
                std::vector<Eigen::MatrixXd>* grad_phi = nullptr,
                Eigen::MatrixXd* grad_W = nullptr);

// Closed-form KL between diagonal Gaussians N(mu, sigma) and the prior.
double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma_diag,
                     const PriorParams& prior);

// dKL/dmu and dKL/d(logvar) for the trainer's backward pass.
void kl_divergence_grads(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma_diag,
                         const PriorParams& prior, Eigen::VectorXd& grad_mu,
                         Eigen::VectorXd& grad_logvar);

struct BatchDoc {
    const BowDocument* doc;
    int slice;
};

// Read-only view of everything the differentiable forward pass needs.
struct ModelParamsView {
    const Eigen::MatrixXd* word_embeddings = nullptr;
    const std::vector<Eigen::MatrixXd>* topic_embeddings = nullptr;
    const EncoderParams* encoder = nullptr;
    PriorParams prior;
    double pi = 1.0;
    bool normalize_counts = false;

    int num_slices() const { return static_cast<int>(topic_embeddings->size()); }
};

struct ModelGrads {
    Eigen::MatrixXd word;
    std::vector<Eigen::MatrixXd> topics;
    EncoderGrads encoder;

    void resize_like(const ModelParamsView& params);
    void set_zero();
};

// Reconstruction + KL over a batch, one epsilon draw per document:
//   sum_d [ -x^T log softmax(beta^(t) theta) + KL(q || p) ].
double tm_loss(const std::vector<BatchDoc>& batch, const ModelParamsView& params,
               const std::vector<Eigen::VectorXd>& eps, ModelGrads* grads = nullptr);

struct LossBreakdown {
    double tm = 0.0;
    double pos = 0.0;
    double neg = 0.0;
    double uwe = 0.0;           // unweighted L_UWE
    double uwe_weighted = 0.0;  // lambda_uwe * L_UWE, the term entering the objective

    double total() const { return tm + pos + neg + uwe_weighted; }
};

// L_TM + L_ETC + lambda_uwe * L_UWE with all ablation switches applied.
LossBreakdown overall_loss(const std::vector<BatchDoc>& batch, const ModelParamsView& params,
                           const LossConfig& cfg, const std::vector<std::vector<int>>& uw_sets,
                           const std::vector<Eigen::VectorXd>& eps, ModelGrads* grads = nullptr);

}  // namespace cfdtm
