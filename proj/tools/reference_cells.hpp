#pragma once

#include <string>
#include <vector>

#include "hybridtrial/estimators.hpp"
#include "hybridtrial/simulation.hpp"

namespace hybridtrial::tools {

/// One reported bias (SD) cell, both x100 and rounded.
struct ReferenceCell {
    Scenario scenario;
    double b;
    int m;
    std::string estimator;
    EstimandName estimand;
    long bias_x100;
    long sd_x100;
};

/// Absolute tolerance, in x100 units, on both bias and SD.
inline constexpr long kCellTolerance = 2;

inline const std::vector<ReferenceCell>& reference_cells() {
    using E = EstimandName;
    static const std::vector<ReferenceCell> cells = {
        {Scenario::S1, 0.4, 1, "aug-ME", E::ATT, 20, 6},
        {Scenario::S1, 0.4, 1, "aug-const", E::ATT, 0, 6},
        {Scenario::S1, 0.4, 1, "PS", E::ATT, 26, 11},
        {Scenario::S1, 0.4, 1, "DR", E::ATT, 0, 6},
        {Scenario::S1, 0.4, 1, "MD", E::ATT, -1, 10},
        {Scenario::S1, 0.2, 10, "aug-ME", E::ATT, 16, 8},
        {Scenario::S1, 0.2, 10, "ANCOVA-ME", E::ATT, 17, 7},
        {Scenario::S2, 0.4, 20, "aug-ME", E::ATT, 44, 11},
        {Scenario::S2, 0.4, 20, "aug-const", E::ATT, -2, 30},
        {Scenario::S2, 0.4, 20, "aug-flex", E::ATT, -1, 24},
        {Scenario::S2, 0.2, 5, "PS", E::ATT, 23, 14},
        {Scenario::S2_lowNoise, 0.4, 1, "MDP", E::ATT, 0, 1},
        {Scenario::S2_lowNoise, 0.4, 1, "aug-const", E::ATT, -1, 3},
        {Scenario::S3, 0.4, 10, "aug-ME", E::ATT, 41, 16},
        {Scenario::S3, 0.4, 10, "aug-flex", E::ATT, 2, 27},
        {Scenario::S4, 0.4, 1, "aug-ME", E::ATE, 18, 10},
        {Scenario::S4, 0.4, 1, "aug-const", E::ATO, -8, 10},
        {Scenario::S4_constB, 0.4, 5, "aug-const", E::ATC, 0, 17},
    };
    return cells;
}

struct TableSpec {
    std::string which;
    Scenario scenario;
};

inline const std::vector<TableSpec>& table_specs() {
    static const std::vector<TableSpec> specs = {
        {"1", Scenario::S1},      {"2", Scenario::S2}, {"2supp", Scenario::S2_lowNoise},
        {"3", Scenario::S3},      {"4", Scenario::S4}, {"4supp", Scenario::S4_constB},
    };
    return specs;
}

inline const std::vector<double>& table_b_grid() {
    static const std::vector<double> g = {0.0, 0.2, 0.4};
    return g;
}

inline const std::vector<int>& table_m_grid() {
    static const std::vector<int> g = {1, 2, 5, 10, 20};
    return g;
}

} // namespace hybridtrial::tools
