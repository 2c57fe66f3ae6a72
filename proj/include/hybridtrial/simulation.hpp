#pragma once

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "hybridtrial/bias_model.hpp"
#include "hybridtrial/error.hpp"
#include "hybridtrial/estimators.hpp"
#include "hybridtrial/linmod.hpp"
#include "hybridtrial/outcome_models.hpp"
#include "hybridtrial/propensity.hpp"
#include "hybridtrial/rng.hpp"
#include "hybridtrial/stats.hpp"
#include "hybridtrial/trial_data.hpp"

namespace hybridtrial {

enum class Scenario { S1, S2, S2_lowNoise, S3, S4, S4_constB };

inline const char* to_string(Scenario s) {
    switch (s) {
    case Scenario::S1: return "1";
    case Scenario::S2: return "2";
    case Scenario::S2_lowNoise: return "2ln";
    case Scenario::S3: return "3";
    case Scenario::S4: return "4";
    case Scenario::S4_constB: return "4c";
    }
    return "?";
}

inline std::optional<Scenario> parse_scenario(const std::string& s) {
    for (auto sc : {Scenario::S1, Scenario::S2, Scenario::S2_lowNoise, Scenario::S3, Scenario::S4,
                    Scenario::S4_constB})
        if (s == to_string(sc)) return sc;
    return std::nullopt;
}

/// Scenarios whose study compares several estimands through the weighted
/// estimator rather than the ATT estimator panel.
inline bool is_multi_estimand(Scenario s) { return s == Scenario::S4 || s == Scenario::S4_constB; }

inline double default_sigma(Scenario s) { return s == Scenario::S2_lowNoise ? 0.2 : 1.0; }

enum class TreatmentScore { fitted, known };

/// Reference value the bias is measured against.
enum class TruthKind {
    /// Per-replicate effect over the estimand's realized population: trial
    /// subjects for ATT, external subjects for ATC, everyone for ATE, and the
    /// true tilting weights h(e_z) otherwise.
    sample,
    /// Super-population value from one seeded 10^6-unit draw.
    population,
};

inline const char* to_string(TruthKind t) { return t == TruthKind::sample ? "sample" : "population"; }

struct SimulationConfig {
    Scenario scenario = Scenario::S1;
    double b = 0.0;
    int m = 1;
    std::size_t n = 1000;
    double sigma = 1.0;
    std::size_t reps = 1000;
    std::uint64_t seed = 1;
    std::vector<EstimandName> estimands;  // empty: scenario default
    TreatmentScore treatment_score = TreatmentScore::fitted;
    TruthKind truth = TruthKind::sample;
    FwlOptions fwl{MembershipStage::linear_projection};
    unsigned threads = 1;

    static SimulationConfig make(Scenario s, double b, int m, std::size_t reps, std::uint64_t seed) {
        SimulationConfig c;
        c.scenario = s;
        c.b = b;
        c.m = m;
        c.reps = reps;
        c.seed = seed;
        c.sigma = default_sigma(s);
        return c;
    }

    std::vector<EstimandName> effective_estimands() const {
        if (!estimands.empty()) return estimands;
        if (is_multi_estimand(scenario)) return {EstimandName::ATE, EstimandName::ATC, EstimandName::ATO};
        return {EstimandName::ATT};
    }

    void check() const {
        if (m < 1) throw DimensionMismatch("ratio m must be a positive integer");
        if (n < 10) throw DimensionMismatch("n must be at least 10");
        if (reps < 1) throw DimensionMismatch("reps must be positive");
        if (!(sigma > 0.0)) throw DimensionMismatch("sigma must be positive");
        if (!std::isfinite(b)) throw DimensionMismatch("b must be finite");
    }
};

/// Trial-membership coefficients on (X1, ..., X4).
inline constexpr std::array<double, 4> kMembershipBeta = {-0.35, 0.3, 1.2, 0.5};

/// Linear-plus-quadratic mean of one potential outcome:
/// intercept + x'beta + quad * (x2^2 - 1).
struct CellMean {
    double intercept = 0.0;
    std::array<double, 4> beta{};
    double quad = 0.0;

    template <typename Row>
    double operator()(const Row& x) const {
        double v = intercept + quad * (x[1] * x[1] - 1.0);
        for (std::size_t j = 0; j < 4; ++j) v += beta[j] * x[static_cast<Eigen::Index>(j)];
        return v;
    }
};

/// Means of Y^0(0), Y^1(0), Y^1(1).
struct OutcomeLaw {
    CellMean mu00;
    CellMean mu10;
    CellMean mu11;
};

inline OutcomeLaw outcome_law(Scenario s, double b) {
    OutcomeLaw law;
    switch (s) {
    case Scenario::S1: {
        const std::array<double, 4> beta = {-0.4, 0.3, -0.7, -0.4};
        law.mu00 = {0.3, beta, 0.0};
        law.mu10 = {0.3 + b, beta, 0.0};
        law.mu11 = {0.3 + b + 0.4, beta, 0.0};
        break;
    }
    case Scenario::S2:
    case Scenario::S2_lowNoise:
    case Scenario::S3:
    case Scenario::S4:
        law.mu00 = {0.3 - b, {-0.4 - b, 0.4 + 2.0 * b, -0.7 - b, -0.4 - 1.5 * b}, 0.0};
        law.mu10 = {0.3, {-0.4, 0.4, -0.7, -0.4}, 0.0};
        law.mu11 = {0.7, {-0.8, 0.1, -0.5, -1.1}, 0.0};
        if (s == Scenario::S3) {
            law.mu00.quad = 0.9 + b;
            law.mu10.quad = 0.9;
            law.mu11.quad = 0.6;
        }
        break;
    case Scenario::S4_constB:
        law.mu00 = {0.3 - b, {-0.6, 0.8, -0.9, -0.7}, 0.0};
        law.mu10 = {0.3, {-0.6, 0.8, -0.9, -0.7}, 0.0};
        law.mu11 = {0.7, {-0.8, 0.1, -0.5, -1.1}, 0.0};
        break;
    }
    return law;
}

/// Covariates: X1 = 2 Ber(0.5) - 1, X2..X4 iid N(0, 1).
template <typename Out>
void draw_covariates(Rng& rng, Out&& x) {
    x[0] = rng.uniform() < 0.5 ? 1.0 : -1.0;
    x[1] = rng.normal();
    x[2] = rng.normal();
    x[3] = rng.normal();
}

inline constexpr std::size_t kAlphaDraws = 1'000'000;
inline constexpr std::uint64_t kAlphaSeed = 0xA1FA5EEDULL;

/// Intercept alpha with E[expit(alpha + X'beta)] = target under the covariate
/// law, by bisection on [-10, 10] against a fixed Monte Carlo sample of
/// antithetic covariate pairs (X, -X). Stops once the expectation is within
/// 1e-4 of the target. Results are cached per (beta, target, draws, seed).
inline double solve_alpha_z(const std::array<double, 4>& beta, double target,
                            std::size_t draws = kAlphaDraws, std::uint64_t seed = kAlphaSeed) {
    if (!(target > 0.0 && target < 1.0)) throw BracketFailure("target fraction outside (0, 1)");

    using Key = std::tuple<std::array<double, 4>, double, std::size_t, std::uint64_t>;
    static std::mutex mu;
    static std::map<Key, double> cache;
    const Key key{beta, target, draws, seed};
    {
        std::lock_guard lock(mu);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    std::vector<double> lp;
    lp.reserve(draws);
    Rng rng(seed);
    std::array<double, 4> x{};
    while (lp.size() < draws) {
        draw_covariates(rng, x);
        double v = 0.0;
        for (std::size_t j = 0; j < 4; ++j) v += beta[j] * x[j];
        lp.push_back(v);
        if (lp.size() < draws) lp.push_back(-v);
    }
    auto excess = [&](double alpha) {
        double s = 0.0;
        for (double v : lp) s += expit(alpha + v);
        return s / static_cast<double>(lp.size()) - target;
    };

    double lo = -10.0, hi = 10.0;
    if (excess(lo) > 0.0 || excess(hi) < 0.0)
        throw BracketFailure("target fraction not attainable on [-10, 10]");
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double f = excess(mid);
        if (std::abs(f) <= 1e-4) break;
        (f < 0.0 ? lo : hi) = mid;
    }
    std::lock_guard lock(mu);
    cache[key] = mid;
    return mid;
}

/// One simulated hybrid trial with its unobserved potential outcomes.
struct SimulatedTruth {
    TrialDataset dataset;
    Eigen::VectorXd y00;
    Eigen::VectorXd y10;
    Eigen::VectorXd y11;
    Eigen::VectorXd e_z_true;
    OutcomeLaw law;

    template <typename Row>
    double b_true(const Row& x) const { return law.mu10(x) - law.mu00(x); }
};

/// Draws replicate `rep_index` of the configured design from
/// child_seed(config.seed, rep_index). Per subject the stream yields, in
/// order: X1..X4, the membership uniform, the arm uniform, the outcome noise.
/// All three potential outcomes share that noise term.
inline SimulatedTruth generate(const SimulationConfig& config, std::uint64_t rep_index) {
    config.check();
    const double alpha = solve_alpha_z(kMembershipBeta, 0.5);
    const double p_treat = static_cast<double>(config.m) / (1.0 + static_cast<double>(config.m));
    const auto n = static_cast<Eigen::Index>(config.n);

    SimulatedTruth t;
    t.law = outcome_law(config.scenario, config.b);
    auto& d = t.dataset;
    d.z.resize(n);
    d.a.resize(n);
    d.x.resize(n, 4);
    d.y.resize(n);
    t.y00.resize(n);
    t.y10.resize(n);
    t.y11.resize(n);
    t.e_z_true.resize(n);

    Rng rng(child_seed(config.seed, rep_index));
    std::array<double, 4> x{};
    for (Eigen::Index i = 0; i < n; ++i) {
        draw_covariates(rng, x);
        const double u_z = rng.uniform();
        const double u_a = rng.uniform();
        const double eps = config.sigma * rng.normal();

        double lp = alpha;
        for (std::size_t j = 0; j < 4; ++j) lp += kMembershipBeta[j] * x[j];
        const double ez = expit(lp);
        const int zi = u_z < ez ? 1 : 0;
        const int ai = zi == 1 && u_a < p_treat ? 1 : 0;

        for (Eigen::Index j = 0; j < 4; ++j) d.x(i, j) = x[static_cast<std::size_t>(j)];
        t.e_z_true[i] = ez;
        t.y00[i] = t.law.mu00(x) + eps;
        t.y10[i] = t.law.mu10(x) + eps;
        t.y11[i] = t.law.mu11(x) + eps;
        d.z[i] = zi;
        d.a[i] = ai;
        d.y[i] = t.y11[i] * zi * ai + t.y10[i] * zi * (1 - ai) + t.y00[i] * (1 - zi);
    }
    d.outcome_kind = OutcomeKind::continuous;
    return t;
}

/// sum h(e_z) (Y^1(1) - Y^1(0)) / sum h(e_z) with the true membership scores.
inline double true_wate(const SimulatedTruth& truth, const EstimandSpec& estimand) {
    return true_wate(truth.e_z_true, truth.y11 - truth.y10, estimand);
}

/// Realized effect of one replicate over the estimand's population.
inline double sample_truth(const SimulatedTruth& truth, const EstimandSpec& estimand) {
    const auto& z = truth.dataset.z;
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        double w = 0.0;
        switch (estimand.name) {
        case EstimandName::ATT: w = z[i]; break;
        case EstimandName::ATC: w = 1 - z[i]; break;
        case EstimandName::ATE: w = 1.0; break;
        default: w = estimand.h(truth.e_z_true[i]); break;
        }
        num += w * (truth.y11[i] - truth.y10[i]);
        den += w;
    }
    return num / den;
}

inline constexpr std::size_t kTruthDraws = 1'000'000;
inline constexpr std::uint64_t kTruthSeed = 0x7217E5EEDULL;

/// Super-population value of the estimand, from one seeded 10^6-unit draw.
/// Cached per (scenario, b, estimand).
inline double population_truth(Scenario s, double b, EstimandName estimand) {
    using Key = std::tuple<Scenario, double, EstimandName>;
    static std::mutex mu;
    static std::map<Key, double> cache;
    const Key key{s, b, estimand};
    {
        std::lock_guard lock(mu);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    SimulationConfig c = SimulationConfig::make(s, b, 1, 1, kTruthSeed);
    c.n = kTruthDraws;
    const double v = true_wate(generate(c, 0), EstimandSpec::from_name(estimand));
    std::lock_guard lock(mu);
    cache[key] = v;
    return v;
}

struct ResultRow {
    Scenario scenario = Scenario::S1;
    double b = 0.0;
    int m = 1;
    std::string estimator;
    EstimandName estimand = EstimandName::ATT;
    double bias_raw = 0.0;
    double sd_raw = 0.0;
    std::size_t reps = 0;

    /// x100, rounded half away from zero.
    long bias_x100() const { return std::lround(100.0 * bias_raw); }
    long sd_x100() const { return std::lround(100.0 * sd_raw); }
    /// Column label used in the aligned text table.
    std::string label() const {
        return is_multi_estimand(scenario) ? std::string(to_string(estimand)) + "-" + estimator.substr(4)
                                           : estimator;
    }
};

struct ResultTable {
    std::vector<ResultRow> rows;
    std::size_t failed_reps = 0;

    const ResultRow* find(double b, int m, const std::string& estimator, EstimandName estimand) const {
        for (const auto& r : rows)
            if (r.b == b && r.m == m && r.estimator == estimator && r.estimand == estimand) return &r;
        return nullptr;
    }

    void append(const ResultTable& other) {
        rows.insert(rows.end(), other.rows.begin(), other.rows.end());
        failed_reps += other.failed_reps;
    }
};

namespace detail {

inline std::string shortest(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct RepEstimate {
    std::string estimator;
    EstimandName estimand;
    double point;
};

inline std::vector<RepEstimate> analyze_replicate(const SimulationConfig& config, const TrialDataset& d) {
    const DesignSpec design = DesignSpec::main_effects(d.n_covariates());
    const TreatmentPropensityModel a_model =
        config.treatment_score == TreatmentScore::known
            ? TreatmentPropensityModel{KnownConstant{static_cast<double>(config.m) / (1.0 + config.m)}}
            : TreatmentPropensityModel{design};
    const FittedPropensities fp = estimate_propensities(d, design, a_model);
    const OutcomeModels me = fit_outcome_models(d, BiasSpec::mean_exchangeability(), design, config.fwl);
    const OutcomeModels cst = fit_outcome_models(d, BiasSpec::constant(), design, config.fwl);
    const OutcomeModels flex = fit_outcome_models(d, BiasSpec::flexible(), design, config.fwl);

    std::vector<RepEstimate> out;
    if (!is_multi_estimand(config.scenario)) {
        const auto att = EstimandSpec::att();
        out.push_back({"MD", EstimandName::ATT, estimate_md(d).point});
        out.push_back({"MDP", EstimandName::ATT, estimate_mdp(d, fit_trial_outcome_models(d, design)).point});
        out.push_back({"PS", EstimandName::ATT, estimate_ps(d, fp).point});
        out.push_back({"DR", EstimandName::ATT, estimate_dr(d, fp, me).point});
        out.push_back({"ANCOVA-ME", EstimandName::ATT, estimate_ancova(d, false).point});
        out.push_back({"ANCOVA-const", EstimandName::ATT, estimate_ancova(d, true).point});
        for (auto e : config.effective_estimands()) {
            const auto spec = EstimandSpec::from_name(e);
            out.push_back({"aug-ME", e, estimate_wate(d, fp, me, spec).point});
            out.push_back({"aug-const", e, estimate_wate(d, fp, cst, spec).point});
            out.push_back({"aug-flex", e, estimate_wate(d, fp, flex, spec).point});
        }
    } else {
        for (auto e : config.effective_estimands()) {
            const auto spec = EstimandSpec::from_name(e);
            out.push_back({"aug-ME", e, estimate_wate(d, fp, me, spec).point});
            out.push_back({"aug-const", e, estimate_wate(d, fp, cst, spec).point});
            out.push_back({"aug-flex", e, estimate_wate(d, fp, flex, spec).point});
        }
    }
    return out;
}

} // namespace detail

/// Estimates of every estimator variant for one replicate (throws on failure).
inline std::vector<detail::RepEstimate> run_replicate(const SimulationConfig& config, std::uint64_t rep_index) {
    return detail::analyze_replicate(config, generate(config, rep_index).dataset);
}

/// Replication study: bias and Monte Carlo SD of every estimator against the
/// configured truth. Replicates run on `config.threads` workers; aggregation
/// follows replicate order, so output does not depend on the thread count.
/// More than 1% failed replicates aborts the study.
inline ResultTable run_study(const SimulationConfig& config) {
    config.check();
    std::map<EstimandName, double> population;
    if (config.truth == TruthKind::population)
        for (auto e : config.effective_estimands()) population[e] = population_truth(config.scenario, config.b, e);

    // per replicate: estimates with their errors in `point`
    std::vector<std::optional<std::vector<detail::RepEstimate>>> results(config.reps);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t r = next++; r < config.reps; r = next++) {
            try {
                const SimulatedTruth t = generate(config, r);
                auto est = detail::analyze_replicate(config, t.dataset);
                std::map<EstimandName, double> truth = population;
                if (config.truth == TruthKind::sample)
                    for (auto e : config.effective_estimands())
                        truth[e] = sample_truth(t, EstimandSpec::from_name(e));
                for (auto& e : est) e.point -= truth.at(e.estimand);
                results[r] = std::move(est);
            } catch (const Error&) {
            }
        }
    };
    const unsigned n_threads = std::max(1u, config.threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    ResultTable table;
    const std::vector<detail::RepEstimate>* layout = nullptr;
    for (const auto& r : results) {
        if (r)
            layout = layout ? layout : &*r;
        else
            ++table.failed_reps;
    }
    if (static_cast<double>(table.failed_reps) > 0.01 * static_cast<double>(config.reps) || layout == nullptr)
        throw TooManyFailures(table.failed_reps, config.reps);

    for (std::size_t k = 0; k < layout->size(); ++k) {
        std::vector<double> err;
        err.reserve(results.size());
        for (const auto& r : results)
            if (r) err.push_back((*r)[k].point);
        ResultRow row;
        row.scenario = config.scenario;
        row.b = config.b;
        row.m = config.m;
        row.estimator = (*layout)[k].estimator;
        row.estimand = (*layout)[k].estimand;
        row.bias_raw = stats::mean(err);
        row.sd_raw = err.size() > 1 ? stats::sample_sd(err) : 0.0;
        row.reps = err.size();
        table.rows.push_back(row);
    }
    return table;
}

inline void write_csv(const ResultTable& t, std::ostream& out) {
    out << "scenario,b,m,estimator,estimand,bias_x100,sd_x100,bias_raw,sd_raw,reps\n";
    for (const auto& r : t.rows) {
        out << to_string(r.scenario) << ',' << detail::shortest(r.b) << ',' << r.m << ',' << r.estimator << ','
            << to_string(r.estimand) << ',' << r.bias_x100() << ',' << r.sd_x100() << ','
            << detail::shortest(r.bias_raw) << ',' << detail::shortest(r.sd_raw) << ',' << r.reps << '\n';
    }
}

/// Aligned "bias (sd)" table, one line per (b, m) and one column per
/// estimator, b printed x100.
inline void write_text(const ResultTable& t, std::ostream& out) {
    std::vector<std::string> columns;
    std::vector<std::pair<double, int>> cells;
    for (const auto& r : t.rows) {
        const auto label = r.label();
        if (std::find(columns.begin(), columns.end(), label) == columns.end()) columns.push_back(label);
        const std::pair<double, int> cell{r.b, r.m};
        if (std::find(cells.begin(), cells.end(), cell) == cells.end()) cells.push_back(cell);
    }
    std::size_t width = 9;
    for (const auto& c : columns) width = std::max(width, c.size() + 2);

    out << std::setw(5) << "b" << std::setw(7) << "1:m";
    for (const auto& c : columns) out << std::setw(static_cast<int>(width)) << c;
    out << '\n';
    for (const auto& [b, m] : cells) {
        out << std::setw(5) << std::lround(100.0 * b) << std::setw(7) << ("1:" + std::to_string(m));
        for (const auto& c : columns) {
            std::string entry = "-";
            for (const auto& r : t.rows)
                if (r.b == b && r.m == m && r.label() == c)
                    entry = std::to_string(r.bias_x100()) + " (" + std::to_string(r.sd_x100()) + ")";
            out << std::setw(static_cast<int>(width)) << entry;
        }
        out << '\n';
    }
}

} // namespace hybridtrial
