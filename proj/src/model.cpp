#include "cfdtm/model.hpp"

#include <cmath>
#include <stdexcept>

#include "cfdtm/embeddings.hpp"
#include "cfdtm/util.hpp"

namespace cfdtm {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

PriorParams PriorParams::laplace_approximation(int num_topics) {
    if (num_topics < 2) {
        throw std::invalid_argument("PriorParams: the (K-1)/K prior needs K >= 2");
    }
    PriorParams prior;
    prior.mu0 = Eigen::VectorXd::Zero(num_topics);
    prior.sigma0_diag = Eigen::VectorXd::Constant(
        num_topics, (static_cast<double>(num_topics) - 1.0) / static_cast<double>(num_topics));
    return prior;
}

bool EncoderParams::all_finite() const {
    return w1.allFinite() && w2.allFinite() && wmu.allFinite() && wlv.allFinite() &&
           b1.allFinite() && b2.allFinite() && bmu.allFinite() && blv.allFinite();
}

EncoderParams EncoderParams::init(int vocab_size, int hidden, int num_topics,
                                  std::uint64_t seed) {
    if (vocab_size < 1 || hidden < 1 || num_topics < 1) {
        throw std::invalid_argument("EncoderParams::init: sizes must be >= 1");
    }
    Rng rng(seed);
    auto glorot = [&rng](int rows, int cols) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(rows + cols));
        return gaussian_matrix(rows, cols, stddev, rng);
    };
    EncoderParams p;
    p.w1 = glorot(hidden, vocab_size);
    p.b1 = Eigen::VectorXd::Zero(hidden);
    p.w2 = glorot(hidden, hidden);
    p.b2 = Eigen::VectorXd::Zero(hidden);
    p.wmu = glorot(num_topics, hidden);
    p.bmu = Eigen::VectorXd::Zero(num_topics);
    p.wlv = glorot(num_topics, hidden);
    p.blv = Eigen::VectorXd::Zero(num_topics);
    return p;
}

void EncoderGrads::resize_like(const EncoderParams& params) {
    w1.setZero(params.w1.rows(), params.w1.cols());
    w2.setZero(params.w2.rows(), params.w2.cols());
    wmu.setZero(params.wmu.rows(), params.wmu.cols());
    wlv.setZero(params.wlv.rows(), params.wlv.cols());
    b1.setZero(params.b1.size());
    b2.setZero(params.b2.size());
    bmu.setZero(params.bmu.size());
    blv.setZero(params.blv.size());
}

void EncoderGrads::set_zero() {
    w1.setZero();
    w2.setZero();
    wmu.setZero();
    wlv.setZero();
    b1.setZero();
    b2.setZero();
    bmu.setZero();
    blv.setZero();
}

void EncoderGrads::add_scaled(const EncoderGrads& other, double scale) {
    w1 += scale * other.w1;
    w2 += scale * other.w2;
    wmu += scale * other.wmu;
    wlv += scale * other.wlv;
    b1 += scale * other.b1;
    b2 += scale * other.b2;
    bmu += scale * other.bmu;
    blv += scale * other.blv;
}

EncoderForward encode(const BowDocument& bow, const EncoderParams& params, bool normalize_counts) {
    if (bow.counts.empty() || bow.total <= 0) {
        throw std::invalid_argument("encode: bag-of-words input is all-zero");
    }
    EncoderForward fwd;
    fwd.input_scale = normalize_counts ? 1.0 / static_cast<double>(bow.total) : 1.0;

    fwd.z1 = params.b1;
    for (const auto& [id, count] : bow.counts) {
        if (id < 0 || id >= params.vocab_size()) {
            throw std::invalid_argument("encode: word id out of range");
        }
        fwd.z1 += (static_cast<double>(count) * fwd.input_scale) * params.w1.col(id);
    }
    fwd.h1 = fwd.z1.unaryExpr([](double v) { return softplus(v); });
    fwd.z2 = params.w2 * fwd.h1 + params.b2;
    fwd.h2 = fwd.z2.unaryExpr([](double v) { return softplus(v); });
    fwd.mu = params.wmu * fwd.h2 + params.bmu;
    fwd.logvar = params.wlv * fwd.h2 + params.blv;
    return fwd;
}

EncoderForward encode(const Eigen::VectorXd& bow, const EncoderParams& params,
                      bool normalize_counts) {
    if (bow.size() != params.vocab_size()) {
        throw std::invalid_argument("encode: bag-of-words size does not match encoder");
    }
    BowDocument doc;
    for (int i = 0; i < bow.size(); ++i) {
        const double v = bow(i);
        if (v < 0.0 || !std::isfinite(v)) {
            throw std::invalid_argument("encode: counts must be finite and nonnegative");
        }
        if (v > 0.0) {
            doc.counts.emplace_back(i, static_cast<int>(std::llround(v)));
            doc.total += static_cast<int>(std::llround(v));
        }
    }
    return encode(doc, params, normalize_counts);
}

void encoder_backward(const EncoderParams& params, const BowDocument& bow,
                      const EncoderForward& fwd, const Eigen::VectorXd& grad_mu,
                      const Eigen::VectorXd& grad_logvar, EncoderGrads& grads) {
    grads.wmu += grad_mu * fwd.h2.transpose();
    grads.bmu += grad_mu;
    grads.wlv += grad_logvar * fwd.h2.transpose();
    grads.blv += grad_logvar;

    Eigen::VectorXd grad_h2 = params.wmu.transpose() * grad_mu + params.wlv.transpose() * grad_logvar;
    Eigen::VectorXd grad_z2 =
        grad_h2.cwiseProduct(fwd.z2.unaryExpr([](double v) { return sigmoid(v); }));
    grads.w2 += grad_z2 * fwd.h1.transpose();
    grads.b2 += grad_z2;

    Eigen::VectorXd grad_h1 = params.w2.transpose() * grad_z2;
    Eigen::VectorXd grad_z1 =
        grad_h1.cwiseProduct(fwd.z1.unaryExpr([](double v) { return sigmoid(v); }));
    grads.b1 += grad_z1;
    for (const auto& [id, count] : bow.counts) {
        grads.w1.col(id) += (static_cast<double>(count) * fwd.input_scale) * grad_z1;
    }
}

Eigen::VectorXd reparameterize(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma_diag,
                               const Eigen::VectorXd& eps) {
    if (mu.size() != sigma_diag.size() || mu.size() != eps.size()) {
        throw std::invalid_argument("reparameterize: size mismatch");
    }
    if ((sigma_diag.array() < 0.0).any()) {
        throw std::invalid_argument("reparameterize: sigma_diag must be nonnegative");
    }
    return mu + sigma_diag.array().sqrt().matrix().cwiseProduct(eps);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
    const double m = x.maxCoeff();
    Eigen::VectorXd e = (x.array() - m).exp();
    return e / e.sum();
}

Eigen::MatrixXd topic_word_distribution(const Eigen::MatrixXd& phi_t, const Eigen::MatrixXd& W,
                                        double pi) {
    if (phi_t.cols() != W.rows()) {
        throw std::invalid_argument("topic_word_distribution: embedding dimensions disagree");
    }
    if (!(pi > 0.0)) throw std::invalid_argument("topic_word_distribution: pi must be > 0");
    if (!phi_t.allFinite() || !W.allFinite()) {
        throw std::invalid_argument("topic_word_distribution: non-finite inputs");
    }
    const Eigen::VectorXd phi_sq = phi_t.rowwise().squaredNorm();
    const Eigen::VectorXd word_sq = W.colwise().squaredNorm();
    // dist2[k,i] = ||phi_k||^2 + ||w_i||^2 - 2 phi_k . w_i, clamped at 0.
    Eigen::MatrixXd scores = -2.0 * (phi_t * W);
    scores.colwise() += phi_sq;
    scores.rowwise() += word_sq.transpose();
    scores = scores.cwiseMax(0.0) / -pi;

    Eigen::MatrixXd beta(scores.rows(), scores.cols());
    for (int i = 0; i < scores.cols(); ++i) {
        const double m = scores.col(i).maxCoeff();
        Eigen::VectorXd e = (scores.col(i).array() - m).exp();
        beta.col(i) = e / e.sum();
    }
    return beta;
}

void topic_word_distribution_backward(const Eigen::MatrixXd& phi_t, const Eigen::MatrixXd& W,
                                      double pi, const Eigen::MatrixXd& beta,
                                      const Eigen::MatrixXd& grad_beta, Eigen::MatrixXd& grad_phi_t,
                                      Eigen::MatrixXd& grad_W) {
    // Column-wise softmax backward: grad_s = beta .* (grad_beta - colsum(beta .* grad_beta)).
    const Eigen::RowVectorXd weighted = (beta.cwiseProduct(grad_beta)).colwise().sum();
    Eigen::MatrixXd grad_score = beta.cwiseProduct(grad_beta.rowwise() - weighted);

    // score = -dist2/pi with dist2 clamped at 0; no gradient through clamped entries.
    const Eigen::VectorXd phi_sq = phi_t.rowwise().squaredNorm();
    const Eigen::VectorXd word_sq = W.colwise().squaredNorm();
    Eigen::MatrixXd raw = -2.0 * (phi_t * W);
    raw.colwise() += phi_sq;
    raw.rowwise() += word_sq.transpose();
    Eigen::MatrixXd grad_dist2 =
        (raw.array() > 0.0).select(grad_score / -pi, Eigen::MatrixXd::Zero(raw.rows(), raw.cols()));

    // d dist2 / d phi_k = 2(phi_k - w_i); d dist2 / d w_i = 2(w_i - phi_k).
    const Eigen::VectorXd row_sums = grad_dist2.rowwise().sum();
    grad_phi_t += 2.0 * (row_sums.asDiagonal() * phi_t - grad_dist2 * W.transpose());
    const Eigen::RowVectorXd col_sums = grad_dist2.colwise().sum();
    grad_W += 2.0 * (W * col_sums.asDiagonal() - phi_t.transpose() * grad_dist2);
}

Eigen::VectorXd doc_topic_distribution(const Eigen::VectorXd& r) {
    if (!r.allFinite()) throw std::invalid_argument("doc_topic_distribution: non-finite input");
    return softmax(r);
}

Eigen::VectorXd reconstruct(const Eigen::MatrixXd& beta, const Eigen::VectorXd& theta) {
    if (beta.rows() != theta.size()) {
        throw std::invalid_argument("reconstruct: beta rows must match theta size");
    }
    return softmax(beta.transpose() * theta);
}

}  // namespace cfdtm
