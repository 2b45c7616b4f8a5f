#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beliefnet/survey.hpp"

namespace beliefnet {

class FactorError : public Error {
public:
    using Error::Error;
};

/// Symmetric matrix of pairwise Pearson correlations, unit diagonal.
struct CorrelationMatrix {
    Eigen::MatrixXd values;

    Eigen::Index dim() const noexcept { return values.rows(); }
};

/// Topic x factor loadings plus the fit summary they came from.
struct LoadingMatrix {
    Eigen::MatrixXd loadings;
    Eigen::VectorXd eigenvalues;  // pre-rotation, descending
    double explained_variance_fraction = 0.0;

    Eigen::Index topics() const noexcept { return loadings.rows(); }
    Eigen::Index factors() const noexcept { return loadings.cols(); }

    Eigen::VectorXd communalities() const { return loadings.rowwise().squaredNorm(); }
};

/// Pearson correlations of the columns of `data` (observations x variables).
/// `names` labels columns in error messages and may be empty.
inline CorrelationMatrix correlation_matrix(const Eigen::MatrixXd& data,
                                            const std::vector<std::string>& names = {}) {
    const auto n = data.rows();
    if (n < 3) {
        throw FactorError("correlation needs at least 3 respondents, got " + std::to_string(n));
    }
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Eigen::MatrixXd centered = data.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered;
    const Eigen::VectorXd var = cov.diagonal();
    for (Eigen::Index j = 0; j < var.size(); ++j) {
        if (!(var(j) > 0.0)) {
            const auto name = j < static_cast<Eigen::Index>(names.size())
                                  ? names[static_cast<std::size_t>(j)]
                                  : "#" + std::to_string(j);
            throw FactorError("topic '" + name + "' has zero variance");
        }
    }
    const Eigen::VectorXd inv_sd = var.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
    corr = (0.5 * (corr + corr.transpose())).eval();
    corr = corr.cwiseMax(-1.0).cwiseMin(1.0);
    corr.diagonal().setOnes();
    return {std::move(corr)};
}

inline CorrelationMatrix correlation_matrix(const SurveyDataset& dataset) {
    Eigen::MatrixXd data(static_cast<Eigen::Index>(dataset.respondent_count()),
                         static_cast<Eigen::Index>(dataset.topic_count()));
    for (std::size_t i = 0; i < dataset.respondent_count(); ++i)
        for (std::size_t j = 0; j < dataset.topic_count(); ++j)
            data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                dataset.rating(i, j).value();
    std::vector<std::string> names;
    for (const auto& t : dataset.topics()) names.push_back(t.id);
    return correlation_matrix(data, names);
}

namespace detail {

inline constexpr double kEigenClampTolerance = 1e-10;

/// Flips each column so that its largest-magnitude entry is positive.
/// Ties go to the earliest row. Applies the same flips to `companion` if given.
inline void normalize_reflections(Eigen::MatrixXd& loadings, Eigen::MatrixXd* companion = nullptr) {
    for (Eigen::Index f = 0; f < loadings.cols(); ++f) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < loadings.rows(); ++j) {
            if (std::abs(loadings(j, f)) > std::abs(loadings(best, f))) best = j;
        }
        if (loadings.rows() > 0 && loadings(best, f) < 0.0) {
            loadings.col(f) *= -1.0;
            if (companion) companion->col(f) *= -1.0;
        }
    }
}

}  // namespace detail

/// Eigenvalues of the correlation matrix, descending, with tiny negatives
/// clamped to zero. This is the scree spectrum.
inline Eigen::VectorXd eigen_spectrum(const CorrelationMatrix& corr) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr.values, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw FactorError("eigendecomposition failed");
    Eigen::VectorXd ev = solver.eigenvalues().reverse();
    for (Eigen::Index j = 0; j < ev.size(); ++j) {
        if (ev(j) < -detail::kEigenClampTolerance) {
            throw FactorError("correlation matrix is not positive semi-definite (eigenvalue " +
                              std::to_string(ev(j)) + ")");
        }
        ev(j) = std::max(ev(j), 0.0);
    }
    return ev;
}

/// Principal-component extraction of k factors: column j is the j-th
/// eigenvector scaled by the square root of its eigenvalue.
inline LoadingMatrix pca_extract(const CorrelationMatrix& corr, Eigen::Index k) {
    const auto m = corr.dim();
    if (k < 1 || k > m) {
        throw FactorError("factor count " + std::to_string(k) + " outside [1, " +
                          std::to_string(m) + "]");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(corr.values);
    if (solver.info() != Eigen::Success) throw FactorError("eigendecomposition failed");

    // Eigen returns ascending order.
    const Eigen::VectorXd all = solver.eigenvalues().reverse();
    const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

    LoadingMatrix out;
    out.eigenvalues.resize(k);
    out.loadings.resize(m, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        double lambda = all(j);
        if (lambda < -detail::kEigenClampTolerance) {
            throw FactorError("correlation matrix is not positive semi-definite (eigenvalue " +
                              std::to_string(lambda) + ")");
        }
        lambda = std::max(lambda, 0.0);
        out.eigenvalues(j) = lambda;
        out.loadings.col(j) = vectors.col(j) * std::sqrt(lambda);
    }
    detail::normalize_reflections(out.loadings);
    out.explained_variance_fraction = out.eigenvalues.sum() / static_cast<double>(m);
    return out;
}

/// Scree elbow: the point (j, lambda_j) farthest from the chord joining the
/// first and last points marks where the curve flattens; the factors before
/// it are retained. An override always wins.
inline Eigen::Index select_factor_count(std::span<const double> eigenvalues,
                                        std::optional<Eigen::Index> override_k = std::nullopt) {
    if (override_k) return *override_k;
    const std::size_t n = eigenvalues.size();
    if (n < 3) return 1;

    const double x0 = 1.0, y0 = eigenvalues.front();
    const double x1 = static_cast<double>(n), y1 = eigenvalues.back();
    const double dx = x1 - x0, dy = y1 - y0;
    const double norm = std::hypot(dx, dy);

    std::size_t elbow = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i + 1);
        const double dist = std::abs(dy * (x - x0) - dx * (eigenvalues[i] - y0)) / norm;
        if (dist > best) {
            best = dist;
            elbow = i;
        }
    }
    return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(elbow));
}

inline Eigen::Index select_factor_count(const Eigen::VectorXd& eigenvalues,
                                        std::optional<Eigen::Index> override_k = std::nullopt) {
    return select_factor_count(
        std::span<const double>(eigenvalues.data(), static_cast<std::size_t>(eigenvalues.size())),
        override_k);
}

// ---------------------------------------------------------------------------
// Varimax
// ---------------------------------------------------------------------------

struct VarimaxOptions {
    bool kaiser_normalize = true;
    double tol = 1e-8;
    int max_iter = 1000;
};

struct VarimaxResult {
    LoadingMatrix rotated;
    Eigen::MatrixXd rotation;  // rotated.loadings == raw.loadings * rotation
    bool converged = true;
    int iterations = 0;
    /// Criterion of the working (normalized, if enabled) matrix: the
    /// starting value, then one entry per sweep.
    std::vector<double> criterion_history;
};

/// sum over factors of [mean(l^4) - mean(l^2)^2].
inline double varimax_criterion(const Eigen::MatrixXd& loadings) {
    const double n = static_cast<double>(loadings.rows());
    if (n == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index f = 0; f < loadings.cols(); ++f) {
        const Eigen::ArrayXd sq = loadings.col(f).array().square();
        const double m2 = sq.sum() / n;
        const double m4 = sq.square().sum() / n;
        total += m4 - m2 * m2;
    }
    return total;
}

/// Orthogonal Varimax rotation by cyclic pairwise planar rotations. Each
/// planar step uses the closed-form optimal angle for its column pair, so
/// the criterion never decreases between sweeps.
inline VarimaxResult varimax_rotate(const LoadingMatrix& raw, const VarimaxOptions& options = {}) {
    const auto m = raw.topics();
    const auto k = raw.factors();
    if (k < 1) throw FactorError("varimax needs at least one factor");

    VarimaxResult result;
    result.rotation = Eigen::MatrixXd::Identity(k, k);
    result.rotated = raw;
    if (k == 1) {
        result.criterion_history.push_back(varimax_criterion(raw.loadings));
        return result;
    }

    Eigen::VectorXd row_scale = Eigen::VectorXd::Ones(m);
    if (options.kaiser_normalize) {
        const Eigen::VectorXd h = raw.loadings.rowwise().norm();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (h(j) > 0.0) row_scale(j) = 1.0 / h(j);
        }
    }
    Eigen::MatrixXd work = row_scale.asDiagonal() * raw.loadings;
    Eigen::MatrixXd& rot = result.rotation;
    const double n = static_cast<double>(m);

    double criterion = varimax_criterion(work);
    result.criterion_history.push_back(criterion);
    result.converged = false;

    for (int iter = 0; iter < options.max_iter; ++iter) {
        for (Eigen::Index p = 0; p + 1 < k; ++p) {
            for (Eigen::Index q = p + 1; q < k; ++q) {
                const Eigen::ArrayXd x = work.col(p).array();
                const Eigen::ArrayXd y = work.col(q).array();
                const Eigen::ArrayXd u = x.square() - y.square();
                const Eigen::ArrayXd v = 2.0 * x * y;
                const double a = u.sum();
                const double b = v.sum();
                const double c = (u.square() - v.square()).sum();
                const double d = 2.0 * (u * v).sum();
                const double num = d - 2.0 * a * b / n;
                const double den = c - (a * a - b * b) / n;
                const double phi = 0.25 * std::atan2(num, den);
                if (std::abs(phi) < 1e-15) continue;
                const double cs = std::cos(phi), sn = std::sin(phi);

                const Eigen::VectorXd wp = work.col(p), wq = work.col(q);
                work.col(p) = cs * wp + sn * wq;
                work.col(q) = -sn * wp + cs * wq;
                const Eigen::VectorXd rp = rot.col(p), rq = rot.col(q);
                rot.col(p) = cs * rp + sn * rq;
                rot.col(q) = -sn * rp + cs * rq;
            }
        }
        const double next = varimax_criterion(work);
        result.criterion_history.push_back(next);
        result.iterations = iter + 1;
        const double gain = next - criterion;
        criterion = next;
        if (gain < options.tol) {
            result.converged = true;
            break;
        }
    }

    Eigen::MatrixXd rotated = raw.loadings * rot;
    detail::normalize_reflections(rotated, &rot);

    // Order factors by the variance they carry after rotation, largest first.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const Eigen::VectorXd ss = rotated.colwise().squaredNorm();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return ss(a) > ss(b); });
    Eigen::MatrixXd sorted_loadings(m, k), sorted_rot(k, k);
    for (Eigen::Index f = 0; f < k; ++f) {
        sorted_loadings.col(f) = rotated.col(order[static_cast<std::size_t>(f)]);
        sorted_rot.col(f) = rot.col(order[static_cast<std::size_t>(f)]);
    }
    result.rotated.loadings = std::move(sorted_loadings);
    result.rotation = std::move(sorted_rot);
    return result;
}

/// Tucker's congruence coefficient between two loading vectors.
inline double tucker_congruence(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double denom = std::sqrt(a.squaredNorm() * b.squaredNorm());
    return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

}  // namespace beliefnet
