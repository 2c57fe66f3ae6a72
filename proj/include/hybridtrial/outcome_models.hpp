#pragma once

#include <Eigen/Dense>

#include <optional>

#include "hybridtrial/bias_model.hpp"
#include "hybridtrial/linmod.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

/// Conditional outcome means mu11, mu10, mu00 of the three (z, a) cells.
///
/// For the ME / constant / linear bias forms mu00 is not fitted on its own:
/// mu00(x) = mu10(x) - b^(x). For the flexible form it is the (0,0) cell fit.
struct OutcomeModels {
    FittedMean mu11;
    FittedMean mu10;
    std::optional<FittedMean> mu00_cell;
    FittedBias bias;

    template <typename Row>
    double mu00(const Row& x) const {
        return mu00_cell ? (*mu00_cell)(x) : mu10(x) - bias(x);
    }

    Eigen::VectorXd eval11(const Eigen::MatrixXd& x) const { return mu11.evaluate(x); }
    Eigen::VectorXd eval10(const Eigen::MatrixXd& x) const { return mu10.evaluate(x); }
    Eigen::VectorXd eval00(const Eigen::MatrixXd& x) const {
        return mu00_cell ? mu00_cell->evaluate(x) : Eigen::VectorXd(mu10.evaluate(x) - bias.evaluate(x));
    }
};

namespace detail {

inline FittedMean fit_treated_mean(const TrialDataset& d, const DesignSpec& design) {
    const auto rows11 = d.cell_rows(1, 1);
    if (rows11.empty()) throw EmptyCell(1, 1);
    const MeanLink link = d.outcome_kind == OutcomeKind::binary ? MeanLink::logit : MeanLink::identity;
    return fit_mean(d, rows11, design, gather(d.y, rows11), link);
}

} // namespace detail

/// Fits the three cell means under `spec`, all on `design` (default in
/// callers: intercept plus main effects of every covariate).
inline OutcomeModels fit_outcome_models(const TrialDataset& d, const BiasSpec& spec, const DesignSpec& design,
                                        const FwlOptions& fwl = {}) {
    validate(d);
    OutcomeModels m;
    m.mu11 = detail::fit_treated_mean(d, design);

    if (spec.kind == BiasKind::flexible) {
        m.bias = fit_bias(d, spec, design, fwl);
        m.mu10 = *m.bias.mu10;
        m.mu00_cell = *m.bias.mu00;
        return m;
    }

    if (d.cell_rows(1, 0).empty()) throw EmptyCell(1, 0);
    m.bias = fit_bias(d, spec, design, fwl);
    const auto controls = control_rows(d);
    // pseudo-outcomes leave {0,1} once shifted, so this path stays on the linear scale
    m.mu10 = fit_mean(d, controls, design, pseudo_outcomes(d, m.bias), MeanLink::identity);
    return m;
}

/// mu11 and mu10 fitted on the trial cells only; mu00 mirrors mu10 and is
/// never needed by trial-only estimators.
inline OutcomeModels fit_trial_outcome_models(const TrialDataset& d, const DesignSpec& design) {
    validate(d);
    const auto rows10 = d.cell_rows(1, 0);
    if (rows10.empty()) throw EmptyCell(1, 0);
    OutcomeModels m;
    m.mu11 = detail::fit_treated_mean(d, design);
    const MeanLink link = d.outcome_kind == OutcomeKind::binary ? MeanLink::logit : MeanLink::identity;
    m.mu10 = fit_mean(d, rows10, design, gather(d.y, rows10), link);
    m.bias.spec = BiasSpec::mean_exchangeability();
    return m;
}

} // namespace hybridtrial
