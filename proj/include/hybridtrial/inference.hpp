#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "hybridtrial/error.hpp"
#include "hybridtrial/estimators.hpp"
#include "hybridtrial/rng.hpp"
#include "hybridtrial/stats.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

enum class InferenceMethod { bootstrap_percentile, if_sandwich };

inline const char* to_string(InferenceMethod m) {
    return m == InferenceMethod::bootstrap_percentile ? "bootstrap_percentile" : "if_sandwich";
}

struct InferenceResult {
    double point = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    InferenceMethod method = InferenceMethod::bootstrap_percentile;
    double level = 0.95;
    std::size_t replicates_used = 0;
    std::size_t replicates_failed = 0;
};

/// Any full analysis pipeline mapping a dataset to a point estimate.
using EstimatorClosure = std::function<double(const TrialDataset&)>;

struct BootstrapOptions {
    std::size_t replicates = 1000;
    std::uint64_t seed = 0;
    double level = 0.95;
    unsigned threads = 1;
    /// Largest tolerated share of failed replicates.
    double max_failure_rate = 0.05;
};

/// Rows of bootstrap replicate `r`: each (z, a) cell resampled with
/// replacement to its original size, cells in the order (1,1), (1,0), (0,0).
inline std::vector<std::size_t> stratified_resample(const TrialDataset& d, std::uint64_t seed, std::uint64_t r) {
    Rng rng(child_seed(seed, r));
    std::vector<std::size_t> rows;
    rows.reserve(d.size());
    for (const auto& [z, a] : {std::pair{1, 1}, std::pair{1, 0}, std::pair{0, 0}}) {
        const auto cell = d.cell_rows(z, a);
        for (std::size_t k = 0; k < cell.size(); ++k) rows.push_back(cell[rng.index(cell.size())]);
    }
    return rows;
}

/// Stratified nonparametric bootstrap of the whole pipeline with a
/// percentile interval. Replicate r draws from child_seed(seed, r), so the
/// result does not depend on the number of threads.
inline InferenceResult bootstrap(const TrialDataset& d, const EstimatorClosure& estimator,
                                 const BootstrapOptions& opt) {
    if (opt.replicates < 100) throw DimensionMismatch("bootstrap needs at least 100 replicates");
    if (!(opt.level > 0.0 && opt.level < 1.0)) throw DimensionMismatch("level must lie in (0, 1)");
    validate(d);

    InferenceResult out;
    out.method = InferenceMethod::bootstrap_percentile;
    out.level = opt.level;
    out.point = estimator(d);

    std::vector<std::optional<double>> values(opt.replicates);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < opt.replicates; r = next++) {
            try {
                const double v = estimator(d.subset(stratified_resample(d, opt.seed, r)));
                if (std::isfinite(v)) values[r] = v;
            } catch (const Error&) {
            }
        }
    };
    const unsigned n_threads = std::max(1u, opt.threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    std::vector<double> ok;
    ok.reserve(values.size());
    for (const auto& v : values)
        if (v) ok.push_back(*v);
    out.replicates_used = ok.size();
    out.replicates_failed = values.size() - ok.size();
    if (static_cast<double>(out.replicates_failed) > opt.max_failure_rate * static_cast<double>(opt.replicates))
        throw TooManyFailures(out.replicates_failed, opt.replicates);

    out.std_error = stats::sample_sd(ok);
    std::sort(ok.begin(), ok.end());
    const double alpha = 1.0 - opt.level;
    out.ci_low = stats::quantile_sorted(ok, alpha / 2.0);
    out.ci_high = stats::quantile_sorted(ok, 1.0 - alpha / 2.0);
    return out;
}

/// Estimated influence values of the weighted estimator at tau_hat:
/// IF_i = h_i * (lambda_i * (Delta_i - tau_hat) + T_i) / mean(h * lambda).
inline Eigen::VectorXd influence_values(const WateTerms& w, double tau_hat) {
    const auto n = static_cast<double>(w.h.size());
    const double scale = w.denominator / n;
    Eigen::VectorXd out(w.h.size());
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out[i] = w.h[i] * (w.lambda[i] * (w.delta[i] - tau_hat) + w.t[i]) / scale;
    return out;
}

/// Plug-in variance sum(IF^2) / N^2 with a Wald interval.
inline InferenceResult if_variance(const TrialDataset& d, const FittedPropensities& fp, const OutcomeModels& models,
                                   const EstimandSpec& estimand, double tau_hat, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0)) throw DimensionMismatch("level must lie in (0, 1)");
    const WateTerms w = wate_terms(d, fp, models, estimand);
    const Eigen::VectorXd inf = influence_values(w, tau_hat);
    const auto n = static_cast<double>(inf.size());

    InferenceResult out;
    out.method = InferenceMethod::if_sandwich;
    out.level = level;
    out.point = tau_hat;
    out.std_error = std::sqrt(inf.squaredNorm() / (n * n));
    const double zq = boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
    out.ci_low = tau_hat - zq * out.std_error;
    out.ci_high = tau_hat + zq * out.std_error;
    out.replicates_used = 0;
    return out;
}

} // namespace hybridtrial
