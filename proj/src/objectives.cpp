#include "cfdtm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace cfdtm {

namespace {

// d cos(a,b)/da scaled by 1/tau, reused by every contrastive term.
void cosine_grads(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tau,
                  Eigen::VectorXd& da, Eigen::VectorXd& db) {
    const double na = a.norm();
    const double nb = b.norm();
    const double dot = a.dot(b);
    const double inv = 1.0 / (na * nb * tau);
    da = (b - (dot / (na * na)) * a) * inv;
    db = (a - (dot / (nb * nb)) * b) * inv;
}

double log_sum_exp(const Eigen::VectorXd& values) {
    const double m = values.maxCoeff();
    return m + std::log((values.array() - m).exp().sum());
}

}  // namespace

void LossConfig::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("LossConfig: tau must be > 0");
    if (!(pi > 0.0)) throw std::invalid_argument("LossConfig: pi must be > 0");
    if (gamma < 0.0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
    if (lambda_uwe < 0.0) throw std::invalid_argument("LossConfig: lambda_uwe must be >= 0");
    if (n_top < 1) throw std::invalid_argument("LossConfig: n_top must be >= 1");
    for (double v : lambda_schedule) {
        if (v < 0.0) throw std::invalid_argument("LossConfig: lambda^(t) must be >= 0");
    }
}

double similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("similarity: tau must be > 0");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("similarity: zero-norm input");
    return a.dot(b) / (na * nb * tau);
}

double positive_loss(const std::vector<Eigen::MatrixXd>& phi, const LossConfig& cfg,
                     std::vector<Eigen::MatrixXd>* grad_phi) {
    const int T = static_cast<int>(phi.size());
    if (T < 1) throw std::invalid_argument("positive_loss: need at least one slice");
    double loss = 0.0;
    Eigen::VectorXd da, db;
    for (int t = 1; t < T; ++t) {
        const double lambda_t = cfg.lambda_at(t);
        const auto& cur = phi[static_cast<std::size_t>(t)];
        const auto& prev = phi[static_cast<std::size_t>(t - 1)];
        for (int k = 0; k < cur.rows(); ++k) {
            const Eigen::VectorXd a = cur.row(k).transpose();
            const Eigen::VectorXd b = prev.row(k).transpose();
            loss -= lambda_t * similarity(a, b, cfg.tau);
            if (grad_phi != nullptr) {
                cosine_grads(a, b, cfg.tau, da, db);
                (*grad_phi)[static_cast<std::size_t>(t)].row(k) -= lambda_t * da.transpose();
                (*grad_phi)[static_cast<std::size_t>(t - 1)].row(k) -= lambda_t * db.transpose();
            }
        }
    }
    return loss;
}

double negative_loss(const std::vector<Eigen::MatrixXd>& phi, const LossConfig& cfg,
                     std::vector<Eigen::MatrixXd>* grad_phi) {
    double loss = 0.0;
    Eigen::VectorXd da, db;
    for (std::size_t t = 0; t < phi.size(); ++t) {
        const auto& topics = phi[t];
        const int K = static_cast<int>(topics.rows());
        if (K < 2) throw std::invalid_argument("negative_loss: needs K >= 2");

        Eigen::MatrixXd sims(K, K);
        for (int k = 0; k < K; ++k) {
            for (int j = k + 1; j < K; ++j) {
                sims(k, j) = sims(j, k) =
                    similarity(topics.row(k).transpose(), topics.row(j).transpose(), cfg.tau);
            }
            sims(k, k) = 0.0;  // excluded below
        }
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd others(K - 1);
            int idx = 0;
            for (int j = 0; j < K; ++j) {
                if (j != k) others(idx++) = sims(k, j);
            }
            const double lse = log_sum_exp(others);
            loss += cfg.gamma * lse;
            if (grad_phi != nullptr) {
                for (int j = 0; j < K; ++j) {
                    if (j == k) continue;
                    const double weight = cfg.gamma * std::exp(sims(k, j) - lse);
                    cosine_grads(topics.row(k).transpose(), topics.row(j).transpose(), cfg.tau, da, db);
                    (*grad_phi)[t].row(k) += weight * da.transpose();
                    (*grad_phi)[t].row(j) += weight * db.transpose();
                }
            }
        }
    }
    return loss;
}

double etc_loss(const std::vector<Eigen::MatrixXd>& phi, const LossConfig& cfg,
                std::vector<Eigen::MatrixXd>* grad_phi) {
    if (!cfg.enable_etc) return 0.0;
    double loss = positive_loss(phi, cfg, grad_phi);
    if (cfg.enable_negative) loss += negative_loss(phi, cfg, grad_phi);
    return loss;
}

std::vector<std::vector<int>> top_words_per_topic(const Eigen::MatrixXd& beta, int n_top) {
    const int vocab = static_cast<int>(beta.cols());
    if (n_top < 1 || n_top > vocab) {
        throw std::invalid_argument("top_words_per_topic: n_top must be in [1, |V|]");
    }
    std::vector<std::vector<int>> result;
    result.reserve(static_cast<std::size_t>(beta.rows()));
    std::vector<int> order(static_cast<std::size_t>(vocab));
    for (int k = 0; k < beta.rows(); ++k) {
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + n_top, order.end(),
                          [&beta, k](int a, int b) {
                              if (beta(k, a) != beta(k, b)) return beta(k, a) > beta(k, b);
                              return a < b;
                          });
        result.emplace_back(order.begin(), order.begin() + n_top);
    }
    return result;
}

std::vector<int> top_word_set(const Eigen::MatrixXd& beta, int n_top) {
    std::vector<int> all;
    for (const auto& topic : top_words_per_topic(beta, n_top)) {
        all.insert(all.end(), topic.begin(), topic.end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

std::vector<int> unassociated_words(const std::vector<int>& v_top,
                                    const std::vector<int>& v_slice) {
    std::vector<int> out;
    std::set_difference(v_top.begin(), v_top.end(), v_slice.begin(), v_slice.end(),
                        std::back_inserter(out));
    return out;
}

double uwe_loss(const std::vector<Eigen::MatrixXd>& phi, const Eigen::MatrixXd& W,
                const std::vector<std::vector<int>>& uw_sets, const LossConfig& cfg,
                std::vector<Eigen::MatrixXd>* grad_phi, Eigen::MatrixXd* grad_W) {
    if (cfg.uwe_masking_mode) return 0.0;
    if (uw_sets.size() != phi.size()) {
        throw std::invalid_argument("uwe_loss: one unassociated-word set per slice required");
    }
    double loss = 0.0;
    Eigen::VectorXd da, db;
    for (std::size_t t = 0; t < phi.size(); ++t) {
        const auto& uw = uw_sets[t];
        if (uw.empty()) continue;
        const auto& topics = phi[t];
        for (int k = 0; k < topics.rows(); ++k) {
            Eigen::VectorXd sims(static_cast<Eigen::Index>(uw.size()));
            for (std::size_t x = 0; x < uw.size(); ++x) {
                sims(static_cast<Eigen::Index>(x)) =
                    similarity(topics.row(k).transpose(), W.col(uw[x]), cfg.tau);
            }
            const double lse = log_sum_exp(sims);
            loss += lse;
            if (grad_phi != nullptr || grad_W != nullptr) {
                for (std::size_t x = 0; x < uw.size(); ++x) {
                    const double weight = std::exp(sims(static_cast<Eigen::Index>(x)) - lse);
                    cosine_grads(topics.row(k).transpose(), W.col(uw[x]), cfg.tau, da, db);
                    if (grad_phi != nullptr) {
                        (*grad_phi)[t].row(k) += weight * da.transpose();
                    }
                    if (grad_W != nullptr) grad_W->col(uw[x]) += weight * db;
                }
            }
        }
    }
    return loss;
}

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma_diag,
                     const PriorParams& prior) {
    if (mu.size() != prior.mu0.size() || sigma_diag.size() != prior.mu0.size()) {
        throw std::invalid_argument("kl_divergence: dimension mismatch with prior");
    }
    if ((sigma_diag.array() <= 0.0).any()) {
        throw std::invalid_argument("kl_divergence: sigma_diag must be strictly positive");
    }
    double kl = 0.0;
    for (int k = 0; k < mu.size(); ++k) {
        const double s = sigma_diag(k);
        const double s0 = prior.sigma0_diag(k);
        const double dm = prior.mu0(k) - mu(k);
        kl += s / s0 + dm * dm / s0 - 1.0 + std::log(s0) - std::log(s);
    }
    return 0.5 * kl;
}

void kl_divergence_grads(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma_diag,
                         const PriorParams& prior, Eigen::VectorXd& grad_mu,
                         Eigen::VectorXd& grad_logvar) {
    grad_mu = (mu - prior.mu0).cwiseQuotient(prior.sigma0_diag);
    grad_logvar = 0.5 * (sigma_diag.cwiseQuotient(prior.sigma0_diag).array() - 1.0).matrix();
}

void ModelGrads::resize_like(const ModelParamsView& params) {
    word.setZero(params.word_embeddings->rows(), params.word_embeddings->cols());
    topics.resize(params.topic_embeddings->size());
    for (std::size_t t = 0; t < topics.size(); ++t) {
        topics[t].setZero((*params.topic_embeddings)[t].rows(),
                          (*params.topic_embeddings)[t].cols());
    }
    encoder.resize_like(*params.encoder);
}

void ModelGrads::set_zero() {
    word.setZero();
    for (auto& t : topics) t.setZero();
    encoder.set_zero();
}

double tm_loss(const std::vector<BatchDoc>& batch, const ModelParamsView& params,
               const std::vector<Eigen::VectorXd>& eps, ModelGrads* grads) {
    if (batch.empty()) throw std::invalid_argument("tm_loss: batch is empty");
    if (eps.size() != batch.size()) {
        throw std::invalid_argument("tm_loss: one epsilon draw per document required");
    }
    const Eigen::MatrixXd& W = *params.word_embeddings;
    const int K = params.prior.num_topics();

    // beta^(t) once per distinct slice in the batch.
    std::unordered_map<int, Eigen::MatrixXd> betas;
    std::unordered_map<int, Eigen::MatrixXd> grad_betas;
    for (const auto& item : batch) {
        if (item.slice < 0 || item.slice >= params.num_slices()) {
            throw std::invalid_argument("tm_loss: slice id out of range");
        }
        if (betas.find(item.slice) == betas.end()) {
            const auto& phi_t = (*params.topic_embeddings)[static_cast<std::size_t>(item.slice)];
            betas.emplace(item.slice, topic_word_distribution(phi_t, W, params.pi));
            if (grads != nullptr) {
                grad_betas.emplace(item.slice, Eigen::MatrixXd::Zero(K, W.cols()));
            }
        }
    }

    double loss = 0.0;
    for (std::size_t d = 0; d < batch.size(); ++d) {
        const BowDocument& doc = *batch[d].doc;
        const Eigen::MatrixXd& beta = betas.at(batch[d].slice);

        const EncoderForward fwd = encode(doc, *params.encoder, params.normalize_counts);
        const Eigen::VectorXd sigma = fwd.sigma_diag();
        const Eigen::VectorXd r = reparameterize(fwd.mu, sigma, eps[d]);
        const Eigen::VectorXd theta = softmax(r);

        const Eigen::VectorXd y = beta.transpose() * theta;
        const double y_max = y.maxCoeff();
        const double log_z = y_max + std::log((y.array() - y_max).exp().sum());
        double recon = 0.0;
        for (const auto& [id, count] : doc.counts) {
            recon -= static_cast<double>(count) * (y(id) - log_z);
        }
        loss += recon + kl_divergence(fwd.mu, sigma, params.prior);

        if (grads == nullptr) continue;

        // d recon / dy = total * softmax(y) - x.
        Eigen::VectorXd grad_y = static_cast<double>(doc.total) * (y.array() - log_z).exp().matrix();
        for (const auto& [id, count] : doc.counts) grad_y(id) -= static_cast<double>(count);

        Eigen::VectorXd grad_theta = beta * grad_y;
        grad_betas.at(batch[d].slice).noalias() += theta * grad_y.transpose();

        // softmax backward for theta = softmax(r).
        Eigen::VectorXd grad_r =
            theta.cwiseProduct(grad_theta - Eigen::VectorXd::Constant(K, theta.dot(grad_theta)));

        Eigen::VectorXd kl_mu, kl_logvar;
        kl_divergence_grads(fwd.mu, sigma, params.prior, kl_mu, kl_logvar);

        const Eigen::VectorXd grad_mu = grad_r + kl_mu;
        // r depends on logvar through sqrt(exp(logvar)) * eps.
        const Eigen::VectorXd grad_logvar =
            0.5 * grad_r.cwiseProduct(eps[d]).cwiseProduct(sigma.array().sqrt().matrix()) +
            kl_logvar;
        encoder_backward(*params.encoder, doc, fwd, grad_mu, grad_logvar, grads->encoder);
    }

    if (grads != nullptr) {
        for (const auto& [slice, grad_beta] : grad_betas) {
            const auto& phi_t = (*params.topic_embeddings)[static_cast<std::size_t>(slice)];
            topic_word_distribution_backward(phi_t, W, params.pi, betas.at(slice), grad_beta,
                                             grads->topics[static_cast<std::size_t>(slice)],
                                             grads->word);
        }
    }
    return loss;
}

LossBreakdown overall_loss(const std::vector<BatchDoc>& batch, const ModelParamsView& params,
                           const LossConfig& cfg, const std::vector<std::vector<int>>& uw_sets,
                           const std::vector<Eigen::VectorXd>& eps, ModelGrads* grads) {
    cfg.validate();
    LossBreakdown out;
    out.tm = tm_loss(batch, params, eps, grads);

    std::vector<Eigen::MatrixXd>* grad_phi = grads != nullptr ? &grads->topics : nullptr;
    if (cfg.enable_etc) {
        out.pos = positive_loss(*params.topic_embeddings, cfg, grad_phi);
        if (cfg.enable_negative) {
            out.neg = negative_loss(*params.topic_embeddings, cfg, grad_phi);
        }
    }
    if (cfg.enable_uwe && !cfg.uwe_masking_mode && cfg.lambda_uwe != 0.0) {
        // Chain rule for the lambda_uwe weight is applied by scaling gradients.
        std::vector<Eigen::MatrixXd> phi_grad_buffer;
        Eigen::MatrixXd w_grad_buffer;
        std::vector<Eigen::MatrixXd>* phi_sink = nullptr;
        Eigen::MatrixXd* w_sink = nullptr;
        if (grads != nullptr) {
            phi_grad_buffer.resize(params.topic_embeddings->size());
            for (std::size_t t = 0; t < phi_grad_buffer.size(); ++t) {
                phi_grad_buffer[t].setZero((*params.topic_embeddings)[t].rows(),
                                           (*params.topic_embeddings)[t].cols());
            }
            w_grad_buffer.setZero(params.word_embeddings->rows(), params.word_embeddings->cols());
            phi_sink = &phi_grad_buffer;
            w_sink = &w_grad_buffer;
        }
        out.uwe = uwe_loss(*params.topic_embeddings, *params.word_embeddings, uw_sets, cfg,
                           phi_sink, w_sink);
        out.uwe_weighted = cfg.lambda_uwe * out.uwe;
        if (grads != nullptr) {
            for (std::size_t t = 0; t < phi_grad_buffer.size(); ++t) {
                grads->topics[t] += cfg.lambda_uwe * phi_grad_buffer[t];
            }
            grads->word += cfg.lambda_uwe * w_grad_buffer;
        }
    }
    return out;
}

}  // namespace cfdtm
