#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "laplex/common.hpp"
#include "laplex/errors.hpp"
#include "laplex/operator.hpp"

namespace laplex {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Gaussian with covariance D + F F^T where D = diag(d^2) and
/// F = sum_c diag(w_c) A L_c^T for the implicit kernel operator A (n x k_lap).
/// F is never stored; products with F and F^T go through the operator.
class FactorGaussian {
  public:
    FactorGaussian(std::vector<double> mean, std::vector<double> diag_noise,
                   std::vector<std::vector<double>> weights, LaplexOperator<double> op,
                   std::vector<Mat> factors)
        : mean_(std::move(mean)),
          diag_(std::move(diag_noise)),
          weights_(std::move(weights)),
          op_(std::move(op)),
          factors_(std::move(factors)) {
        validate();
    }

    std::size_t n() const { return mean_.size(); }
    std::size_t k_lap() const { return op_.k(); }
    std::size_t components() const { return weights_.size(); }

    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& diag_noise() const { return diag_; }
    const std::vector<std::vector<double>>& weights() const { return weights_; }
    const LaplexOperator<double>& op() const { return op_; }
    const std::vector<Mat>& factors() const { return factors_; }

    void set_mean(std::vector<double> m) {
        mean_ = std::move(m);
        invalidate();
        validate();
    }
    void set_diag_noise(std::vector<double> d) {
        diag_ = std::move(d);
        invalidate();
        validate();
    }
    void set_weights(std::vector<std::vector<double>> w) {
        weights_ = std::move(w);
        invalidate();
        validate();
    }
    void set_factors(std::vector<Mat> f) {
        factors_ = std::move(f);
        invalidate();
        validate();
    }

    /// F z = sum_c w_c (.) matvec(L_c^T z).
    Vec apply_F(const Vec& z) const {
        if (std::size_t(z.size()) != k_lap()) throw DimensionMismatch("apply_F: z length");
        Vec out = Vec::Zero(n());
        for (std::size_t c = 0; c < components(); ++c) {
            Vec lz = factors_[c].transpose() * z;
            std::vector<double> y = op_matvec(std::vector<double>(lz.data(), lz.data() + lz.size()));
            for (std::size_t i = 0; i < n(); ++i) out[i] += weights_[c][i] * y[i];
        }
        return out;
    }

    /// F^T r = sum_c L_c matvec_transpose(w_c (.) r).
    Vec apply_Ft(const Vec& r) const {
        if (std::size_t(r.size()) != n()) throw DimensionMismatch("apply_Ft: r length");
        Vec out = Vec::Zero(k_lap());
        std::vector<double> wr(n());
        for (std::size_t c = 0; c < components(); ++c) {
            for (std::size_t i = 0; i < n(); ++i) wr[i] = weights_[c][i] * r[i];
            std::vector<double> y = op_matvec_transpose(wr);
            out += factors_[c] * Eigen::Map<const Vec>(y.data(), y.size());
        }
        return out;
    }

    /// M = I + F^T D^{-1} F assembled from the distinct pairwise Grams
    /// G_{cd} = A^T diag(w_c w_d / d^2) A, each a single weighted Gram on the
    /// role-swapped operator; only c <= d is evaluated.
    const Mat& capacitance() const {
        if (!cap_) {
            const std::size_t kl = k_lap(), I = components();
            Mat M = Mat::Identity(kl, kl);
            LaplexOperator<double> swapped = op_.transposed();
            std::vector<double> wts(n());
            for (std::size_t c = 0; c < I; ++c)
                for (std::size_t d = c; d < I; ++d) {
                    for (std::size_t i = 0; i < n(); ++i)
                        wts[i] = weights_[c][i] * weights_[d][i] / (diag_[i] * diag_[i]);
                    GramResult<double> G = swapped.has_phases() ? swapped.phased_gram(wts)
                                                                : swapped.weighted_gram(wts);
                    Eigen::Map<const Mat> Gm(G.matrix.data.data(), kl, kl);
                    Mat term = factors_[c] * Gm * factors_[d].transpose();
                    M += (c == d) ? term : Mat(term + term.transpose());
                }
            cap_ = M;
            llt_.emplace(M);
            if (llt_->info() != Eigen::Success)
                throw NumericalBreakdown("capacitance: Cholesky factorization failed");
        }
        return *cap_;
    }

    const Eigen::LLT<Mat>& capacitance_llt() const {
        capacitance();
        return *llt_;
    }

    /// log N(x; mean, Sigma) via the Woodbury identity and the cached
    /// capacitance Cholesky; Sigma is never formed.
    double log_likelihood(const std::vector<double>& x) const {
        if (x.size() != n()) throw DimensionMismatch("log_likelihood: x length");
        const auto& llt = capacitance_llt();
        Vec r(n()), rdi(n());
        double quad = 0, logdet_d = 0;
        for (std::size_t i = 0; i < n(); ++i) {
            r[i] = x[i] - mean_[i];
            rdi[i] = r[i] / (diag_[i] * diag_[i]);
            quad += r[i] * rdi[i];
            logdet_d += 2.0 * std::log(diag_[i]);
        }
        Vec u = apply_Ft(rdi);
        quad -= u.dot(llt.solve(u));
        double logdet_m = 0;
        for (Eigen::Index i = 0; i < llt.matrixL().rows(); ++i)
            logdet_m += 2.0 * std::log(llt.matrixL()(i, i));
        const double log2pi = std::log(2.0 * 3.14159265358979323846);
        return -0.5 * (quad + logdet_d + logdet_m + double(n()) * log2pi);
    }

    /// Posterior mode of the latent z and its reconstruction:
    /// M z* = F^T D^{-1} (x - mean), x_hat = mean + F z*.
    std::pair<Vec, Vec> map_reconstruct(const std::vector<double>& x) const {
        if (x.size() != n()) throw DimensionMismatch("map_reconstruct: x length");
        Vec rdi(n());
        for (std::size_t i = 0; i < n(); ++i)
            rdi[i] = (x[i] - mean_[i]) / (diag_[i] * diag_[i]);
        Vec rhs = apply_Ft(rdi);
        Vec z = capacitance_llt().solve(rhs);
        if (!z.allFinite()) throw NumericalBreakdown("map_reconstruct: solve failed");
        Vec xh = apply_F(z);
        for (std::size_t i = 0; i < n(); ++i) xh[i] += mean_[i];
        return {std::move(z), std::move(xh)};
    }

    /// count i.i.d. draws x = mean + F z + d (.) eps, rows of the result.
    Matrix<double> sample(std::size_t count, std::uint64_t seed) const {
        if (count == 0) throw EmptyInput("sample: count must be >= 1");
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Matrix<double> out(count, n());
        Vec z(k_lap());
        for (std::size_t s = 0; s < count; ++s) {
            for (std::size_t p = 0; p < k_lap(); ++p) z[p] = gauss(rng);
            Vec fz = apply_F(z);
            for (std::size_t i = 0; i < n(); ++i)
                out(s, i) = mean_[i] + fz[i] + diag_[i] * gauss(rng);
        }
        return out;
    }

  private:
    friend struct FitDriver;

    std::vector<double> op_matvec(const std::vector<double>& v) const {
        return op_.has_phases() ? op_.phased_matvec(v) : op_.matvec(v);
    }
    std::vector<double> op_matvec_transpose(const std::vector<double>& v) const {
        if (!op_.has_phases()) return op_.matvec_transpose(v);
        return op_.transposed().phased_matvec(v);
    }

    void invalidate() {
        cap_.reset();
        llt_.reset();
    }

    void validate() const {
        const std::size_t nn = mean_.size();
        if (nn == 0) throw EmptyInput("FactorGaussian: empty mean");
        if (op_.n() != nn) throw DimensionMismatch("FactorGaussian: operator rows");
        if (diag_.size() != nn) throw DimensionMismatch("FactorGaussian: diag length");
        if (weights_.empty() || factors_.size() != weights_.size())
            throw DimensionMismatch("FactorGaussian: component counts");
        require_finite(mean_, "FactorGaussian mean");
        require_finite(diag_, "FactorGaussian diag");
        for (double d : diag_)
            if (!(d > 0)) throw NonFinite("FactorGaussian: diag_noise must be positive");
        for (const auto& w : weights_) {
            if (w.size() != nn) throw DimensionMismatch("FactorGaussian: weight length");
            require_finite(w, "FactorGaussian weights");
        }
        for (const auto& L : factors_) {
            if (std::size_t(L.rows()) != op_.k() || std::size_t(L.cols()) != op_.k())
                throw DimensionMismatch("FactorGaussian: factor shape");
            if (!L.allFinite()) throw NonFinite("FactorGaussian: non-finite factor");
        }
    }

    std::vector<double> mean_;
    std::vector<double> diag_;                   // d, not d^2
    std::vector<std::vector<double>> weights_;   // w_c
    LaplexOperator<double> op_;
    std::vector<Mat> factors_;                   // L_c

    mutable std::optional<Mat> cap_;
    mutable std::optional<Eigen::LLT<Mat>> llt_;
};

struct FitResult {
    FactorGaussian model;
    std::vector<double> loss_trace;  // mean negative log-likelihood per step
};

/// Gradient blocks of the mean NLL, in the training parametrization
/// (log d for the noise; log of the factor diagonal when I = 1).
struct FitGradients {
    Vec grad_mean;
    Vec grad_log_diag;
    std::vector<Vec> grad_weights;
    std::vector<Mat> grad_factors;
};

struct FitDriver {
    // Dense F and its component blocks B_c = A L_c^T; n x k_lap each, built
    // with k_lap operator products per component. Model-sized, not kernel-sized.
    static void build_blocks(const FactorGaussian& m, std::vector<Mat>& B, Mat& F) {
        const std::size_t nn = m.n(), kl = m.k_lap(), I = m.components();
        B.assign(I, Mat(nn, kl));
        F = Mat::Zero(nn, kl);
        std::vector<double> col(kl);
        for (std::size_t c = 0; c < I; ++c) {
            for (std::size_t p = 0; p < kl; ++p) {
                for (std::size_t q = 0; q < kl; ++q) col[q] = m.factors_[c](p, q);
                std::vector<double> y = m.op_matvec(col);
                for (std::size_t i = 0; i < nn; ++i) B[c](i, p) = y[i];
            }
            for (std::size_t i = 0; i < nn; ++i)
                F.row(i) += m.weights_[c][i] * B[c].row(i);
        }
    }

    static double mean_nll(const FactorGaussian& m, const Matrix<double>& data) {
        double s = 0;
        std::vector<double> row(m.n());
        for (std::size_t r = 0; r < data.rows; ++r) {
            std::copy(data.data.begin() + r * data.cols, data.data.begin() + (r + 1) * data.cols,
                      row.begin());
            s -= m.log_likelihood(row);
        }
        return s / double(data.rows);
    }

    static FitGradients gradients(const FactorGaussian& m, const Matrix<double>& data) {
        const std::size_t nn = m.n(), kl = m.k_lap(), I = m.components();
        const std::size_t N = data.rows;

        std::vector<Mat> B;
        Mat F;
        build_blocks(m, B, F);
        Vec d2inv(nn);
        for (std::size_t i = 0; i < nn; ++i) d2inv[i] = 1.0 / (m.diag_[i] * m.diag_[i]);
        Mat H = d2inv.asDiagonal() * F;  // D^{-1} F
        Mat M = Mat::Identity(kl, kl) + F.transpose() * H;
        Eigen::LLT<Mat> llt(M);
        if (llt.info() != Eigen::Success)
            throw NumericalBreakdown("fit: capacitance factorization failed");

        // y_s = Sigma^{-1} r_s via Woodbury, all samples at once.
        Mat R(nn, N);
        for (std::size_t s = 0; s < N; ++s)
            for (std::size_t i = 0; i < nn; ++i) R(i, s) = data(s, i) - m.mean_[i];
        Mat DR = d2inv.asDiagonal() * R;
        Mat Y = DR - H * llt.solve(F.transpose() * DR);

        FitGradients g;
        g.grad_mean = -Y.rowwise().mean();

        // dNLL/dF = Sigma^{-1} F - mean_s y_s (y_s^T F)
        Mat SinvF = H * llt.solve(Mat(Mat::Identity(kl, kl)));
        Mat gradF = SinvF - (Y * (Y.transpose() * F)) / double(N);

        // diag(Sigma^{-1}) = 1/d^2 - rowsum(H M^{-1} (.) H)
        Mat HMi = llt.solve(H.transpose()).transpose();
        g.grad_log_diag = Vec(nn);
        for (std::size_t i = 0; i < nn; ++i) {
            const double sinv_ii = d2inv[i] - HMi.row(i).dot(H.row(i));
            const double mean_y2 = Y.row(i).squaredNorm() / double(N);
            // grad wrt d_i, then chain through d = exp(log d)
            g.grad_log_diag[i] = m.diag_[i] * (sinv_ii - mean_y2) * m.diag_[i];
        }

        g.grad_weights.resize(I);
        g.grad_factors.resize(I);
        std::vector<double> tmp(nn), back(kl);
        for (std::size_t c = 0; c < I; ++c) {
            g.grad_weights[c] = Vec(nn);
            for (std::size_t i = 0; i < nn; ++i)
                g.grad_weights[c][i] = gradF.row(i).dot(B[c].row(i));
            // grad_{L_c} = (A^T diag(w_c) gradF)^T via k_lap transpose products
            Mat at(kl, kl);
            for (std::size_t p = 0; p < kl; ++p) {
                for (std::size_t i = 0; i < nn; ++i) tmp[i] = m.weights_[c][i] * gradF(i, p);
                std::vector<double> y = m.op_matvec_transpose(tmp);
                for (std::size_t q = 0; q < kl; ++q) at(q, p) = y[q];
            }
            g.grad_factors[c] = at.transpose();
            if (I == 1) {
                // lower-triangular with log-parametrized diagonal
                for (std::size_t p = 0; p < kl; ++p)
                    for (std::size_t q = p + 1; q < kl; ++q) g.grad_factors[c](p, q) = 0;
                for (std::size_t p = 0; p < kl; ++p)
                    g.grad_factors[c](p, p) *= m.factors_[c](p, p);
            }
        }
        return g;
    }

    static void apply_step(FactorGaussian& m, const FitGradients& g, double step) {
        const std::size_t nn = m.n(), kl = m.k_lap(), I = m.components();
        std::vector<double> mean = m.mean_, diag = m.diag_;
        auto weights = m.weights_;
        auto factors = m.factors_;
        for (std::size_t i = 0; i < nn; ++i) {
            mean[i] -= step * g.grad_mean[i];
            diag[i] = std::exp(std::log(diag[i]) - step * g.grad_log_diag[i]);
        }
        for (std::size_t c = 0; c < I; ++c) {
            for (std::size_t i = 0; i < nn; ++i) weights[c][i] -= step * g.grad_weights[c][i];
            if (I == 1) {
                for (std::size_t p = 0; p < kl; ++p)
                    for (std::size_t q = 0; q < p; ++q)
                        factors[c](p, q) -= step * g.grad_factors[c](p, q);
                for (std::size_t p = 0; p < kl; ++p)
                    factors[c](p, p) =
                        std::exp(std::log(factors[c](p, p)) - step * g.grad_factors[c](p, p));
            } else {
                factors[c] -= step * g.grad_factors[c];
            }
        }
        m.mean_ = std::move(mean);
        m.diag_ = std::move(diag);
        m.weights_ = std::move(weights);
        m.factors_ = std::move(factors);
        m.invalidate();
    }
};

/// Plain gradient descent with halving backoff on the mean NLL. Anchors,
/// phases and temperature are frozen; only mean, noise, weights and factors
/// move. Throws DivergenceDetected if the loss leaves the finite range.
inline FitResult fit(const FactorGaussian& init, const Matrix<double>& data, std::size_t steps,
                     double step_size) {
    if (data.rows < 2) throw EmptyInput("fit: need at least 2 samples");
    if (data.cols != init.n()) throw DimensionMismatch("fit: data width");
    require_finite(data.data, "fit data");

    FitResult res{init, {}};
    double loss = FitDriver::mean_nll(res.model, data);
    if (!std::isfinite(loss)) throw DivergenceDetected("fit: non-finite initial loss");
    res.loss_trace.push_back(loss);
    double step = step_size;
    for (std::size_t it = 0; it < steps; ++it) {
        FitGradients g = FitDriver::gradients(res.model, data);
        bool accepted = false;
        for (int tries = 0; tries < 40; ++tries) {
            FactorGaussian trial = res.model;
            FitDriver::apply_step(trial, g, step);
            double lt;
            try {
                lt = FitDriver::mean_nll(trial, data);
            } catch (const NumericalBreakdown&) {
                step *= 0.5;
                continue;
            }
            if (!std::isfinite(lt)) throw DivergenceDetected("fit: loss became non-finite");
            if (lt <= loss) {
                res.model = std::move(trial);
                loss = lt;
                accepted = true;
                step *= 1.2;  // gentle recovery after backoffs
                if (step > step_size) step = step_size;
                break;
            }
            step *= 0.5;
        }
        res.loss_trace.push_back(loss);
        if (!accepted) break;  // converged to line-search resolution
    }
    return res;
}

// ---- JSON serialization -----------------------------------------------------

inline nlohmann::json model_to_json(const FactorGaussian& m) {
    nlohmann::json j;
    j["version"] = 1;
    j["n"] = m.n();
    j["k_lap"] = m.k_lap();
    j["I"] = m.components();
    j["temperature"] = m.op().temperature();
    j["mean"] = m.mean();
    std::vector<double> log_diag(m.n());
    for (std::size_t i = 0; i < m.n(); ++i) log_diag[i] = std::log(m.diag_noise()[i]);
    j["log_diag"] = log_diag;
    j["weights"] = m.weights();
    j["anchors_row"] = m.op().row_anchors();
    j["anchors_col"] = m.op().col_anchors();
    if (m.op().has_phases()) {
        j["phases_row"] = m.op().row_phases();
        j["phases_col"] = m.op().col_phases();
    }
    nlohmann::json facs = nlohmann::json::array();
    for (const Mat& L : m.factors()) {
        std::vector<double> flat(L.size());
        for (Eigen::Index r = 0; r < L.rows(); ++r)
            for (Eigen::Index c = 0; c < L.cols(); ++c) flat[r * L.cols() + c] = L(r, c);
        facs.push_back(flat);
    }
    j["factors"] = facs;
    return j;
}

inline FactorGaussian model_from_json(const nlohmann::json& j) {
    try {
        const std::size_t n = j.at("n"), kl = j.at("k_lap"), I = j.at("I");
        const double t = j.value("temperature", 1.0);
        std::vector<double> mean = j.at("mean");
        std::vector<double> log_diag = j.at("log_diag");
        std::vector<double> diag(log_diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = std::exp(log_diag[i]);
        std::vector<std::vector<double>> weights = j.at("weights");
        std::vector<double> ar = j.at("anchors_row"), ac = j.at("anchors_col");
        std::vector<double> pr, pc;
        if (j.contains("phases_row")) {
            pr = j.at("phases_row").get<std::vector<double>>();
            pc = j.at("phases_col").get<std::vector<double>>();
        }
        if (ar.size() != n || ac.size() != kl || weights.size() != I)
            throw DimensionMismatch("model_from_json: inconsistent shapes");
        std::vector<Mat> factors;
        for (const auto& flat : j.at("factors")) {
            std::vector<double> f = flat.get<std::vector<double>>();
            if (f.size() != kl * kl) throw DimensionMismatch("model_from_json: factor size");
            Mat L(kl, kl);
            for (std::size_t r = 0; r < kl; ++r)
                for (std::size_t c = 0; c < kl; ++c) L(r, c) = f[r * kl + c];
            factors.push_back(std::move(L));
        }
        LaplexOperator<double> op(ar, ac, t, pr, pc);
        return FactorGaussian(std::move(mean), std::move(diag), std::move(weights), std::move(op),
                              std::move(factors));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("model_from_json: ") + e.what());
    }
}

inline void save_model(const FactorGaussian& m, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("save_model: cannot open " + path);
    f << model_to_json(m).dump(2) << '\n';
    if (!f) throw IoError("save_model: write failed for " + path);
}

inline FactorGaussian load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_model: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_model: parse error: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace laplex
