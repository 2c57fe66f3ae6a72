#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hybridtrial/error.hpp"
#include "hybridtrial/linmod.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

/// Form assumed for the systematic difference b(x) = mu10(x) - mu00(x)
/// between concurrent and external control outcome means.
enum class BiasKind { mean_exchangeability, constant, linear_in_x, flexible };

inline const char* to_string(BiasKind k) {
    switch (k) {
    case BiasKind::mean_exchangeability: return "ME";
    case BiasKind::constant: return "const";
    case BiasKind::linear_in_x: return "linear";
    case BiasKind::flexible: return "flex";
    }
    return "?";
}

struct BiasSpec {
    BiasKind kind = BiasKind::mean_exchangeability;
    /// Covariates entering b(x) for linear_in_x.
    std::vector<std::size_t> columns;

    static BiasSpec mean_exchangeability() { return {BiasKind::mean_exchangeability, {}}; }
    static BiasSpec constant() { return {BiasKind::constant, {}}; }
    static BiasSpec linear(std::vector<std::size_t> cols) { return {BiasKind::linear_in_x, std::move(cols)}; }
    static BiasSpec flexible() { return {BiasKind::flexible, {}}; }
};

/// How the first partial-regression stage removes the covariates from the
/// trial-membership regressors Z * g(x).
enum class MembershipStage {
    /// E[Z | X, A=0] by logistic regression; the residual of Z * x_j is x_j * (Z - e).
    logistic,
    /// Each regressor Z * g(x) projected on the stage-1 design by OLS. This
    /// makes the two-step coefficients equal the joint least-squares ones.
    linear_projection,
};

struct FwlOptions {
    MembershipStage membership = MembershipStage::logistic;
};

struct FittedBias {
    BiasSpec spec;
    Eigen::VectorXd theta;
    std::optional<FittedMean> mu10;  // flexible only
    std::optional<FittedMean> mu00;  // flexible only

    template <typename Row>
    double operator()(const Row& x) const {
        switch (spec.kind) {
        case BiasKind::mean_exchangeability: return 0.0;
        case BiasKind::constant: return theta[0];
        case BiasKind::linear_in_x: {
            double v = theta[0];
            for (std::size_t k = 0; k < spec.columns.size(); ++k)
                v += theta[static_cast<Eigen::Index>(k + 1)] * x[static_cast<Eigen::Index>(spec.columns[k])];
            return v;
        }
        case BiasKind::flexible: return (*mu10)(x) - (*mu00)(x);
        }
        return 0.0;
    }

    Eigen::VectorXd evaluate(const Eigen::MatrixXd& x) const {
        switch (spec.kind) {
        case BiasKind::mean_exchangeability: return Eigen::VectorXd::Zero(x.rows());
        case BiasKind::flexible: return mu10->evaluate(x) - mu00->evaluate(x);
        default: break;
        }
        Eigen::VectorXd out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = (*this)(x.row(i));
        return out;
    }
};

inline std::vector<std::size_t> control_rows(const TrialDataset& d) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (d.a[static_cast<Eigen::Index>(i)] == 0) rows.push_back(i);
    return rows;
}

inline constexpr double kDegenerateResidualTol = 1e-12;

/// Two-step partial regression for b(x; theta) on the control rows.
///
/// Stage 1 removes the covariates: U = Y - E^[Y | X, A=0] by OLS on
/// `stage1_design`, and each membership regressor Z * g(x) (g = 1 for the
/// constant part, g = x_j for linear terms) is replaced by its residual per
/// `opt.membership`. Stage 2 regresses U on those residuals without intercept.
inline FittedBias fwl_estimate(const TrialDataset& d, const BiasSpec& spec,
                               const DesignSpec& stage1_design, const FwlOptions& opt = {}) {
    if (spec.kind != BiasKind::constant && spec.kind != BiasKind::linear_in_x)
        throw DimensionMismatch("partial regression needs a constant or linear bias model");
    for (auto j : spec.columns)
        if (j >= d.n_covariates()) throw DimensionMismatch("bias column out of range");
    if (!stage1_design.extras.empty())
        throw DimensionMismatch("stage-1 design must be a function of the covariates only");

    const auto controls = control_rows(d);
    std::size_t n_concurrent = 0;
    for (auto i : controls) n_concurrent += static_cast<std::size_t>(d.z[static_cast<Eigen::Index>(i)]);
    const std::size_t n_external = controls.size() - n_concurrent;
    if (n_concurrent == 0 || n_external == 0) throw DegenerateResiduals(0.0);
    if (n_concurrent < 2) throw EmptyCell(1, 0);
    if (n_external < 2) throw EmptyCell(0, 0);

    const auto n = static_cast<Eigen::Index>(controls.size());
    const Eigen::MatrixXd c = stage1_design.build(d, controls);
    const Eigen::VectorXd y = gather(d.y, controls);
    const Eigen::VectorXd z = gather(d.z.cast<double>(), controls);

    const Eigen::VectorXd u = y - c * fit_ols(c, y).coefficients;

    const auto k = static_cast<Eigen::Index>(1 + spec.columns.size());
    Eigen::MatrixXd w(n, k);
    if (opt.membership == MembershipStage::logistic) {
        const Eigen::VectorXd v = z - predict(fit_logistic(c, z), c);
        w.col(0) = v;
        for (Eigen::Index j = 1; j < k; ++j) {
            const auto col = static_cast<Eigen::Index>(spec.columns[static_cast<std::size_t>(j - 1)]);
            for (Eigen::Index r = 0; r < n; ++r)
                w(r, j) = v[r] * d.x(static_cast<Eigen::Index>(controls[static_cast<std::size_t>(r)]), col);
        }
    } else {
        Eigen::MatrixXd raw(n, k);
        raw.col(0) = z;
        for (Eigen::Index j = 1; j < k; ++j) {
            const auto col = static_cast<Eigen::Index>(spec.columns[static_cast<std::size_t>(j - 1)]);
            for (Eigen::Index r = 0; r < n; ++r)
                raw(r, j) = z[r] * d.x(static_cast<Eigen::Index>(controls[static_cast<std::size_t>(r)]), col);
        }
        const auto qr = detail::checked_qr(c);
        w = raw - c * qr.solve(raw);
    }

    const double ss = w.col(0).squaredNorm();
    if (ss < kDegenerateResidualTol) throw DegenerateResiduals(ss);

    FittedBias fb;
    fb.spec = spec;
    fb.theta = fit_ols(w, u).coefficients;
    return fb;
}

/// Fits b(x) under any BiasSpec. `outcome_design` serves as the stage-1 design
/// of the partial regression and as the cell design for the flexible form.
inline FittedBias fit_bias(const TrialDataset& d, const BiasSpec& spec, const DesignSpec& outcome_design,
                           const FwlOptions& opt = {}) {
    switch (spec.kind) {
    case BiasKind::mean_exchangeability: {
        FittedBias fb;
        fb.spec = spec;
        return fb;
    }
    case BiasKind::constant:
    case BiasKind::linear_in_x:
        return fwl_estimate(d, spec, outcome_design, opt);
    case BiasKind::flexible: {
        const auto rows10 = d.cell_rows(1, 0);
        const auto rows00 = d.cell_rows(0, 0);
        if (rows10.empty()) throw EmptyCell(1, 0);
        if (rows00.empty()) throw EmptyCell(0, 0);
        const MeanLink link = d.outcome_kind == OutcomeKind::binary ? MeanLink::logit : MeanLink::identity;
        FittedBias fb;
        fb.spec = spec;
        fb.mu10 = fit_mean(d, rows10, outcome_design, gather(d.y, rows10), link);
        fb.mu00 = fit_mean(d, rows00, outcome_design, gather(d.y, rows00), link);
        return fb;
    }
    }
    throw DimensionMismatch("unknown bias kind");
}

/// Control outcomes on the concurrent scale: Y for concurrent controls and
/// Y + b^(X) for external controls, in the order of control_rows(d).
inline Eigen::VectorXd pseudo_outcomes(const TrialDataset& d, const FittedBias& b) {
    const auto controls = control_rows(d);
    Eigen::VectorXd out(static_cast<Eigen::Index>(controls.size()));
    for (std::size_t r = 0; r < controls.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(controls[r]);
        out[static_cast<Eigen::Index>(r)] = d.z[i] == 1 ? d.y[i] : d.y[i] + b(d.x.row(i));
    }
    return out;
}

} // namespace hybridtrial
