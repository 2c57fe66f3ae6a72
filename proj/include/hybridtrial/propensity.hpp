#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "hybridtrial/error.hpp"
#include "hybridtrial/linmod.hpp"
#include "hybridtrial/stats.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

/// Treatment propensity fixed by design rather than estimated.
struct KnownConstant {
    double q = 0.5;
};

using TreatmentPropensityModel = std::variant<DesignSpec, KnownConstant>;

inline constexpr double kOverlapEpsilon = 1e-6;

struct PropensityOptions {
    /// Clamp fitted scores into [epsilon, 1 - epsilon] instead of failing.
    bool clamp = false;
    double epsilon = kOverlapEpsilon;
};

/// Trial-membership score e_z = P(Z=1 | X) and treatment score
/// e_a = P(A=1 | X, Z=1), both evaluated at every subject.
struct FittedPropensities {
    Eigen::VectorXd e_z;
    Eigen::VectorXd e_a;
    std::optional<FittedLogistic> z_model;  // absent when there are no external rows
    std::optional<FittedLogistic> a_model;  // absent for KnownConstant
    DesignSpec z_design;
    std::optional<DesignSpec> a_design;
    std::size_t clamped = 0;
};

namespace detail {

inline std::size_t enforce_overlap(Eigen::VectorXd& e, const PropensityOptions& opt,
                                   const char* which, bool check_upper = true) {
    std::size_t clamped = 0;
    const double lo = opt.epsilon;
    const double hi = 1.0 - opt.epsilon;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        const bool bad = e[i] < lo || (check_upper && e[i] > hi);
        if (!bad) continue;
        if (!opt.clamp)
            throw OverlapViolation(static_cast<std::size_t>(i),
                                   std::string(which) + " = " + std::to_string(e[i]));
        e[i] = std::clamp(e[i], lo, check_upper ? hi : 1.0);
        ++clamped;
    }
    return clamped;
}

} // namespace detail

/// Fits e_z by logistic regression of z on `z_design` over all rows and e_a by
/// logistic regression of a on the treatment design over the z = 1 rows, then
/// evaluates both at every subject. A dataset without external rows gets
/// e_z = 1 identically (the trial is the whole population).
inline FittedPropensities estimate_propensities(const TrialDataset& d, const DesignSpec& z_design,
                                                const TreatmentPropensityModel& a_model,
                                                const PropensityOptions& opt = {}) {
    const ArmCounts counts = validate(d);
    FittedPropensities fp;
    fp.z_design = z_design;

    if (counts.n00 == 0) {
        fp.e_z = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d.size()));
    } else {
        const Eigen::MatrixXd xz = z_design.build(d);
        fp.z_model = fit_logistic(xz, d.z.cast<double>());
        fp.e_z = predict(*fp.z_model, xz);
    }

    if (const auto* known = std::get_if<KnownConstant>(&a_model)) {
        if (!(known->q > 0.0 && known->q < 1.0))
            throw OverlapViolation(0, "known treatment propensity outside (0, 1)");
        fp.e_a = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d.size()), known->q);
    } else {
        const auto& a_design = std::get<DesignSpec>(a_model);
        if (counts.n11 == 0) throw EmptyCell(1, 1);
        if (counts.n10 == 0) throw EmptyCell(1, 0);
        const auto trial_rows = [&] {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < d.size(); ++i)
                if (d.z[static_cast<Eigen::Index>(i)] == 1) rows.push_back(i);
            return rows;
        }();
        const Eigen::MatrixXd xa_trial = a_design.build(d, trial_rows);
        Eigen::VectorXd a_trial(static_cast<Eigen::Index>(trial_rows.size()));
        for (std::size_t r = 0; r < trial_rows.size(); ++r)
            a_trial[static_cast<Eigen::Index>(r)] = d.a[static_cast<Eigen::Index>(trial_rows[r])];
        fp.a_model = fit_logistic(xa_trial, a_trial);
        fp.a_design = a_design;
        fp.e_a = predict(*fp.a_model, a_design.build(d));
    }

    fp.clamped += detail::enforce_overlap(fp.e_z, opt, "e_z", counts.n00 > 0);
    fp.clamped += detail::enforce_overlap(fp.e_a, opt, "e_a");
    return fp;
}

struct DistributionSummary {
    double min = 0.0;
    double q05 = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double q95 = 0.0;
    double max = 0.0;
};

inline DistributionSummary summarize(const Eigen::VectorXd& v) {
    std::vector<double> s(v.data(), v.data() + v.size());
    std::sort(s.begin(), s.end());
    DistributionSummary out;
    if (s.empty()) return out;
    out.min = s.front();
    out.max = s.back();
    out.q05 = stats::quantile_sorted(s, 0.05);
    out.q25 = stats::quantile_sorted(s, 0.25);
    out.median = stats::quantile_sorted(s, 0.50);
    out.q75 = stats::quantile_sorted(s, 0.75);
    out.q95 = stats::quantile_sorted(s, 0.95);
    return out;
}

struct OverlapReport {
    DistributionSummary e_z;
    DistributionSummary e_a;
    DistributionSummary product;
    /// Subjects with e_z * e_a > 1 - 1e-6.
    std::vector<std::size_t> flagged;
};

inline OverlapReport overlap_report(const FittedPropensities& fp) {
    OverlapReport r;
    const Eigen::VectorXd prod = fp.e_z.cwiseProduct(fp.e_a);
    r.e_z = summarize(fp.e_z);
    r.e_a = summarize(fp.e_a);
    r.product = summarize(prod);
    for (Eigen::Index i = 0; i < prod.size(); ++i)
        if (prod[i] > 1.0 - kOverlapEpsilon) r.flagged.push_back(static_cast<std::size_t>(i));
    return r;
}

} // namespace hybridtrial
