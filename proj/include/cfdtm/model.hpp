#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "cfdtm/corpus.hpp"

namespace cfdtm {

// Logistic-normal prior approximating a symmetric Dirichlet:
// mu0 = 0, Sigma0 diagonal with (K-1)/K entries. Constant, never trained.
struct PriorParams {
    Eigen::VectorXd mu0;
    Eigen::VectorXd sigma0_diag;

    static PriorParams laplace_approximation(int num_topics);
    int num_topics() const { return static_cast<int>(mu0.size()); }
};

// Shared inference network: |V| -> H -> H with softplus, then two affine
// heads producing the posterior mean and per-dimension log-variances.
struct EncoderParams {
    Eigen::MatrixXd w1, w2, wmu, wlv;
    Eigen::VectorXd b1, b2, bmu, blv;

    int vocab_size() const { return static_cast<int>(w1.cols()); }
    int hidden() const { return static_cast<int>(w1.rows()); }
    int num_topics() const { return static_cast<int>(wmu.rows()); }
    bool all_finite() const;

    static EncoderParams init(int vocab_size, int hidden, int num_topics, std::uint64_t seed);
};

struct EncoderForward {
    Eigen::VectorXd z1, h1, z2, h2, mu, logvar;
    double input_scale = 1.0;  // 1/total when count normalization is on

    Eigen::VectorXd sigma_diag() const { return logvar.array().exp(); }
};

struct EncoderGrads {
    Eigen::MatrixXd w1, w2, wmu, wlv;
    Eigen::VectorXd b1, b2, bmu, blv;

    void resize_like(const EncoderParams& params);
    void set_zero();
    void add_scaled(const EncoderGrads& other, double scale);
};

EncoderForward encode(const BowDocument& bow, const EncoderParams& params,
                      bool normalize_counts = false);
EncoderForward encode(const Eigen::VectorXd& bow, const EncoderParams& params,
                      bool normalize_counts = false);

// Accumulates parameter gradients for one document given gradients at the
// two encoder heads.
void encoder_backward(const EncoderParams& params, const BowDocument& bow,
                      const EncoderForward& fwd, const Eigen::VectorXd& grad_mu,
                      const Eigen::VectorXd& grad_logvar, EncoderGrads& grads);

// r = mu + sqrt(sigma_diag) .* eps, with sigma_diag the variance diagonal.
Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma_diag,
                               const Eigen::VectorXd& eps);

Eigen::VectorXd softmax(const Eigen::VectorXd& x);

// beta[k,i] = exp(-||phi_k - w_i||^2 / pi) normalized over topics k, so each
// word's column sums to one. Distances use the expanded form clamped at zero;
// the softmax subtracts the column max, so any finite inputs are safe.
Eigen::MatrixXd topic_word_distribution(const Eigen::MatrixXd& phi_t, const Eigen::MatrixXd& W,
                                        double pi);

// Accumulates d(loss)/d(phi_t) and d(loss)/d(W) given d(loss)/d(beta).
void topic_word_distribution_backward(const Eigen::MatrixXd& phi_t, const Eigen::MatrixXd& W,
                                      double pi, const Eigen::MatrixXd& beta,
                                      const Eigen::MatrixXd& grad_beta, Eigen::MatrixXd& grad_phi_t,
                                      Eigen::MatrixXd& grad_W);

Eigen::VectorXd doc_topic_distribution(const Eigen::VectorXd& r);

// softmax(beta^T theta): mixes topic rows by theta and normalizes over words.
Eigen::VectorXd reconstruct(const Eigen::MatrixXd& beta, const Eigen::VectorXd& theta);

double softplus(double x);
double sigmoid(double x);

}  // namespace cfdtm
