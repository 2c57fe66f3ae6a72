#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hybridtrial/hybridtrial.hpp"
#include "reference_cells.hpp"

namespace hybridtrial::tools {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertFailed = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

namespace detail {

inline std::string fixed(double v, int precision = 6) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << v;
    std::string out = s.str();
    if (out.find_first_not_of("-0.") == std::string::npos) out = out.substr(out[0] == '-' ? 1 : 0);
    return out;
}

inline std::string summary_line(const DistributionSummary& s) {
    return "min " + fixed(s.min, 4) + "  q05 " + fixed(s.q05, 4) + "  q25 " + fixed(s.q25, 4) + "  median " +
           fixed(s.median, 4) + "  q75 " + fixed(s.q75, 4) + "  q95 " + fixed(s.q95, 4) + "  max " +
           fixed(s.max, 4);
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DimensionMismatch("cannot open '" + path + "' for writing");
    return f;
}

} // namespace detail

struct AnalyzeArgs {
    std::string data;
    std::string estimand = "att";
    std::string bias_model = "me";
    std::vector<std::size_t> linear_bias_cols;
    std::string ea = "fit";
    std::string membership = "logistic";
    std::size_t boot = 0;
    std::optional<std::uint64_t> seed;
    double level = 0.95;
    unsigned threads = 1;
    std::string out;
};

/// Everything the analyze report prints, fitted once on the full data.
struct AnalysisSpec {
    EstimandSpec estimand;
    BiasSpec bias;
    TreatmentPropensityModel a_model;
    FwlOptions fwl;
};

inline AnalysisSpec parse_analysis(const AnalyzeArgs& args, std::size_t p) {
    AnalysisSpec s{EstimandSpec::att(), BiasSpec::mean_exchangeability(), DesignSpec::main_effects(p), {}};

    if (args.estimand == "att") s.estimand = EstimandSpec::att();
    else if (args.estimand == "ate") s.estimand = EstimandSpec::ate();
    else if (args.estimand == "atc") s.estimand = EstimandSpec::atc();
    else if (args.estimand == "ato") s.estimand = EstimandSpec::ato();
    else throw DimensionMismatch("unknown estimand '" + args.estimand + "'");

    if (args.bias_model == "me") {
        s.bias = BiasSpec::mean_exchangeability();
    } else if (args.bias_model == "constant") {
        s.bias = BiasSpec::constant();
    } else if (args.bias_model == "flexible") {
        s.bias = BiasSpec::flexible();
    } else if (args.bias_model == "linear") {
        std::vector<std::size_t> cols;
        for (auto c : args.linear_bias_cols) {
            if (c < 1 || c > p)
                throw DimensionMismatch("linear bias column " + std::to_string(c) + " outside 1.." + std::to_string(p));
            cols.push_back(c - 1);
        }
        if (cols.empty())
            for (std::size_t j = 0; j < p; ++j) cols.push_back(j);
        s.bias = BiasSpec::linear(cols);
    } else {
        throw DimensionMismatch("unknown bias model '" + args.bias_model + "'");
    }
    if (!args.linear_bias_cols.empty() && args.bias_model != "linear")
        throw DimensionMismatch("--linear-bias-cols needs --bias-model linear");

    if (args.ea == "fit") {
        s.a_model = DesignSpec::main_effects(p);
    } else if (args.ea.rfind("const:", 0) == 0) {
        const double q = hybridtrial::detail::parse_double(args.ea.substr(6), 0, "ea");
        if (!(q > 0.0 && q < 1.0)) throw DimensionMismatch("--ea const:<q> needs q in (0, 1)");
        s.a_model = KnownConstant{q};
    } else {
        throw DimensionMismatch("--ea must be 'fit' or 'const:<q>'");
    }

    if (args.membership == "logistic") s.fwl.membership = MembershipStage::logistic;
    else if (args.membership == "linear") s.fwl.membership = MembershipStage::linear_projection;
    else throw DimensionMismatch("--membership must be 'logistic' or 'linear'");
    return s;
}

struct PipelineFit {
    FittedPropensities fp;
    OutcomeModels models;
    EstimateResult estimate;
};

inline PipelineFit fit_pipeline(const TrialDataset& d, const AnalysisSpec& s) {
    const DesignSpec design = DesignSpec::main_effects(d.n_covariates());
    PipelineFit f{estimate_propensities(d, design, s.a_model), {}, {}};
    f.models = fit_outcome_models(d, s.bias, design, s.fwl);
    f.estimate = estimate_wate(d, f.fp, f.models, s.estimand);
    return f;
}

inline void write_report(std::ostream& out, const AnalyzeArgs& args, const TrialDataset& d, const AnalysisSpec& s,
                         const PipelineFit& fit, const InferenceResult& inf) {
    const ArmCounts c = validate(d);
    const OverlapReport ov = overlap_report(fit.fp);
    using detail::fixed;

    out << "hybrid trial analysis\n";
    out << "data: " << std::filesystem::path(args.data).filename().string() << "\n";
    out << "subjects: " << d.size() << " (trial treated " << c.n11 << ", trial control " << c.n10
        << ", external control " << c.n00 << ")\n";
    out << "covariates: " << d.n_covariates() << "\n";
    out << "outcome: " << to_string(d.outcome_kind) << "\n";
    out << "\n";
    out << "estimand: " << to_string(s.estimand.name) << "\n";
    out << "estimator: " << fit.estimate.estimator_id << "\n";
    out << "bias model: " << to_string(s.bias.kind) << "\n";
    if (s.bias.kind == BiasKind::constant || s.bias.kind == BiasKind::linear_in_x)
        out << "membership stage: " << (s.fwl.membership == MembershipStage::logistic ? "logistic" : "linear")
            << "\n";
    out << "treatment score: "
        << (std::holds_alternative<KnownConstant>(s.a_model)
                ? "known " + fixed(std::get<KnownConstant>(s.a_model).q, 4)
                : std::string("logistic fit"))
        << "\n";
    out << "\n";
    out << "overlap\n";
    out << "  e_z      " << detail::summary_line(ov.e_z) << "\n";
    out << "  e_a      " << detail::summary_line(ov.e_a) << "\n";
    out << "  e_z*e_a  " << detail::summary_line(ov.product) << "\n";
    out << "  flagged  " << ov.flagged.size() << "\n";
    if (fit.fp.clamped > 0) out << "  clamped  " << fit.fp.clamped << "\n";
    out << "\n";
    if (s.bias.kind == BiasKind::constant || s.bias.kind == BiasKind::linear_in_x) {
        out << "bias coefficients\n";
        out << "  intercept  " << fixed(fit.models.bias.theta[0]) << "\n";
        for (std::size_t k = 0; k < s.bias.columns.size(); ++k)
            out << "  x" << (s.bias.columns[k] + 1) << "         "
                << fixed(fit.models.bias.theta[static_cast<Eigen::Index>(k + 1)]) << "\n";
        out << "\n";
    }
    const int pct = static_cast<int>(std::lround(100.0 * inf.level));
    out << "estimate   " << fixed(inf.point) << "\n";
    out << "std error  " << fixed(inf.std_error) << "\n";
    out << "ci " << pct << "%     [" << fixed(inf.ci_low) << ", " << fixed(inf.ci_high) << "]\n";
    out << "inference  " << to_string(inf.method);
    if (inf.method == InferenceMethod::bootstrap_percentile)
        out << " (" << inf.replicates_used << " replicates, " << inf.replicates_failed << " failed, seed "
            << *args.seed << ")";
    out << "\n";
    out << "\n";
    out << "diagnostics\n";
    for (const auto& [k, v] : fit.estimate.diagnostics) out << "  " << k << " " << fixed(v) << "\n";
    for (const auto& f : fit.estimate.flags) out << "  flag: " << f << "\n";
}

inline int cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
    if (args.boot > 0 && !args.seed) throw DimensionMismatch("--boot needs --seed");
    if (!(args.level > 0.0 && args.level < 1.0)) throw DimensionMismatch("--level must lie in (0, 1)");
    const TrialDataset d = read_csv(args.data);
    const AnalysisSpec spec = parse_analysis(args, d.n_covariates());
    const PipelineFit fit = fit_pipeline(d, spec);

    InferenceResult inf;
    if (args.boot > 0) {
        BootstrapOptions opt;
        opt.replicates = args.boot;
        opt.seed = *args.seed;
        opt.level = args.level;
        opt.threads = detail::resolve_threads(args.threads);
        inf = bootstrap(d, [&](const TrialDataset& b) { return fit_pipeline(b, spec).estimate.point; }, opt);
    } else {
        inf = if_variance(d, fit.fp, fit.models, spec.estimand, fit.estimate.point, args.level);
    }

    if (args.out.empty()) {
        write_report(out, args, d, spec, fit, inf);
    } else {
        auto f = detail::open_output(args.out);
        write_report(f, args, d, spec, fit, inf);
    }
    return kExitOk;
}

struct SimulateArgs {
    std::string scenario;
    double b = 0.0;
    int ratio = 1;
    std::size_t reps = 1000;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string truth = "sample";
    std::string membership = "linear";
    std::string ea = "fit";
    std::string out;
};

inline SimulationConfig make_config(const std::string& scenario, double b, int m, std::size_t reps, std::size_t n,
                                    std::uint64_t seed, unsigned threads, const std::string& truth,
                                    const std::string& membership, const std::string& ea) {
    const auto sc = parse_scenario(scenario);
    if (!sc) throw DimensionMismatch("unknown scenario '" + scenario + "'");
    SimulationConfig c = SimulationConfig::make(*sc, b, m, reps, seed);
    c.n = n;
    c.threads = detail::resolve_threads(threads);
    if (truth == "sample") c.truth = TruthKind::sample;
    else if (truth == "population") c.truth = TruthKind::population;
    else throw DimensionMismatch("--truth must be 'sample' or 'population'");
    if (membership == "linear") c.fwl.membership = MembershipStage::linear_projection;
    else if (membership == "logistic") c.fwl.membership = MembershipStage::logistic;
    else throw DimensionMismatch("--membership must be 'logistic' or 'linear'");
    if (ea == "fit") c.treatment_score = TreatmentScore::fitted;
    else if (ea == "known") c.treatment_score = TreatmentScore::known;
    else throw DimensionMismatch("--ea must be 'fit' or 'known'");
    c.check();
    return c;
}

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out) {
    const SimulationConfig c = make_config(args.scenario, args.b, args.ratio, args.reps, args.n, args.seed,
                                           args.threads, args.truth, args.membership, args.ea);
    const ResultTable t = run_study(c);
    if (!args.out.empty()) {
        auto f = detail::open_output(args.out);
        write_csv(t, f);
    }
    write_text(t, out);
    if (t.failed_reps > 0) out << "failed replicates: " << t.failed_reps << "\n";
    return kExitOk;
}

struct TablesArgs {
    std::string which;
    std::size_t reps = 1000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string truth = "sample";
    std::string membership = "linear";
    std::string ea = "fit";
    std::string out;
    bool check = false;
};

inline ResultTable build_table(const TablesArgs& args) {
    const auto& specs = table_specs();
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const TableSpec& s) { return s.which == args.which; });
    if (it == specs.end()) throw DimensionMismatch("unknown table '" + args.which + "'");
    ResultTable table;
    for (double b : table_b_grid())
        for (int m : table_m_grid())
            table.append(run_study(make_config(to_string(it->scenario), b, m, args.reps, 1000, args.seed,
                                               args.threads, args.truth, args.membership, args.ea)));
    return table;
}

/// PASS/FAIL per reference cell contained in `t`; true when all pass.
inline bool check_reference_cells(const ResultTable& t, std::ostream& out) {
    bool all = true;
    for (const auto& cell : reference_cells()) {
        if (t.rows.empty() || t.rows.front().scenario != cell.scenario) continue;
        const ResultRow* r = t.find(cell.b, cell.m, cell.estimator, cell.estimand);
        const bool ok = r && std::abs(r->bias_x100() - cell.bias_x100) <= kCellTolerance &&
                        std::abs(r->sd_x100() - cell.sd_x100) <= kCellTolerance;
        all = all && ok;
        out << (ok ? "PASS" : "FAIL") << "  b=" << std::lround(100 * cell.b) << " 1:" << cell.m << " "
            << cell.estimator << "/" << to_string(cell.estimand) << "  expected " << cell.bias_x100 << " ("
            << cell.sd_x100 << ")  got ";
        if (r) out << r->bias_x100() << " (" << r->sd_x100() << ")";
        else out << "missing";
        out << "\n";
    }
    return all;
}

inline int cmd_tables(const TablesArgs& args, std::ostream& out) {
    const ResultTable t = build_table(args);
    if (!args.out.empty()) {
        std::filesystem::create_directories(args.out);
        const auto base = std::filesystem::path(args.out) / ("table_" + args.which);
        auto csv = detail::open_output(base.string() + ".csv");
        write_csv(t, csv);
        auto txt = detail::open_output(base.string() + ".txt");
        write_text(t, txt);
    }
    write_text(t, out);
    if (!args.check) return kExitOk;
    out << "\n";
    return check_reference_cells(t, out) ? kExitOk : kExitAssertFailed;
}

struct GenerateArgs {
    std::string scenario;
    double b = 0.0;
    int ratio = 1;
    std::size_t n = 1000;
    std::uint64_t seed = 0;
    std::string out;
};

inline int cmd_generate(const GenerateArgs& args, std::ostream& out) {
    const SimulationConfig c =
        make_config(args.scenario, args.b, args.ratio, 1, args.n, args.seed, 1, "sample", "linear", "fit");
    const TrialDataset d = generate(c, 0).dataset;
    if (args.out.empty()) {
        write_csv(d, out);
    } else {
        auto f = detail::open_output(args.out);
        write_csv(d, f);
    }
    return kExitOk;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Treatment effect estimation for hybrid trials with external controls"};
    app.require_subcommand(1);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Estimate a treatment effect from a CSV dataset");
    analyze->add_option("--data", an.data, "CSV with columns z,a,y,x1..xp")->required();
    analyze->add_option("--estimand", an.estimand, "att | ate | atc | ato")->capture_default_str();
    analyze->add_option("--bias-model", an.bias_model, "me | constant | linear | flexible")->capture_default_str();
    analyze->add_option("--linear-bias-cols", an.linear_bias_cols, "covariates in b(x), 1-based (default all)")
        ->delimiter(',');
    analyze->add_option("--ea", an.ea, "fit | const:<q>")->capture_default_str();
    analyze->add_option("--membership", an.membership, "first stage for b(x): logistic | linear")
        ->capture_default_str();
    analyze->add_option("--boot", an.boot, "bootstrap replicates (0: influence-function variance)")
        ->capture_default_str();
    analyze->add_option("--seed", an.seed, "bootstrap seed");
    analyze->add_option("--level", an.level, "confidence level")->capture_default_str();
    analyze->add_option("--threads", an.threads, "worker threads (0: all cores)")->capture_default_str();
    analyze->add_option("--out", an.out, "write the report here instead of stdout");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run one simulation cell");
    simulate->add_option("--scenario", sim.scenario, "1 | 2 | 2ln | 3 | 4 | 4c")->required();
    simulate->add_option("--b", sim.b, "systematic difference b")->required();
    simulate->add_option("--ratio", sim.ratio, "treatment-to-control ratio m (1:m)")->required();
    simulate->add_option("--reps", sim.reps, "replicates")->capture_default_str();
    simulate->add_option("--n", sim.n, "subjects per replicate")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "master seed")->required();
    simulate->add_option("--threads", sim.threads, "worker threads (0: all cores)")->capture_default_str();
    simulate->add_option("--truth", sim.truth, "sample | population")->capture_default_str();
    simulate->add_option("--membership", sim.membership, "logistic | linear")->capture_default_str();
    simulate->add_option("--ea", sim.ea, "fit | known")->capture_default_str();
    simulate->add_option("--out", sim.out, "result CSV");

    TablesArgs tab;
    auto* tables = app.add_subcommand("tables", "Run a full results table over b x m");
    tables->add_option("--which", tab.which, "1 | 2 | 2supp | 3 | 4 | 4supp")->required();
    tables->add_option("--reps", tab.reps, "replicates per cell")->capture_default_str();
    tables->add_option("--seed", tab.seed, "master seed")->required();
    tables->add_option("--threads", tab.threads, "worker threads (0: all cores)")->capture_default_str();
    tables->add_option("--truth", tab.truth, "sample | population")->capture_default_str();
    tables->add_option("--membership", tab.membership, "logistic | linear")->capture_default_str();
    tables->add_option("--ea", tab.ea, "fit | known")->capture_default_str();
    tables->add_option("--out", tab.out, "directory for table_<which>.csv and .txt");
    tables->add_flag("--assert", tab.check, "check reference cells, exit 1 on mismatch");

    GenerateArgs gen;
    auto* generate_cmd = app.add_subcommand("generate", "Write one simulated dataset as CSV");
    generate_cmd->add_option("--scenario", gen.scenario, "1 | 2 | 2ln | 3 | 4 | 4c")->required();
    generate_cmd->add_option("--b", gen.b, "systematic difference b")->capture_default_str();
    generate_cmd->add_option("--ratio", gen.ratio, "treatment-to-control ratio m")->capture_default_str();
    generate_cmd->add_option("--n", gen.n, "subjects")->capture_default_str();
    generate_cmd->add_option("--seed", gen.seed, "seed")->required();
    generate_cmd->add_option("--out", gen.out, "output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*analyze) return cmd_analyze(an, out);
        if (*simulate) return cmd_simulate(sim, out);
        if (*tables) return cmd_tables(tab, out);
        if (*generate_cmd) return cmd_generate(gen, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.category() == ErrorCategory::validation ? kExitValidation : kExitNumerical;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitValidation;
}

} // namespace hybridtrial::tools
