#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "hybridtrial/error.hpp"

namespace hybridtrial {

enum class OutcomeKind { continuous, binary };

inline const char* to_string(OutcomeKind kind) {
    return kind == OutcomeKind::binary ? "binary" : "continuous";
}

/// Observed data of a hybrid trial: concurrent trial units (z = 1, either arm)
/// plus external controls (z = 0, a = 0).
struct TrialDataset {
    Eigen::VectorXi z;
    Eigen::VectorXi a;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    OutcomeKind outcome_kind = OutcomeKind::continuous;

    std::size_t size() const { return static_cast<std::size_t>(y.size()); }
    std::size_t n_covariates() const { return static_cast<std::size_t>(x.cols()); }

    bool in_cell(std::size_t i, int zz, int aa) const { return z[i] == zz && a[i] == aa; }

    /// Row indices of the (z, a) cell, in dataset order.
    std::vector<std::size_t> cell_rows(int zz, int aa) const {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < size(); ++i)
            if (in_cell(i, zz, aa)) rows.push_back(i);
        return rows;
    }

    /// New dataset made of the given rows (duplicates allowed).
    TrialDataset subset(const std::vector<std::size_t>& rows) const {
        TrialDataset out;
        const auto n = static_cast<Eigen::Index>(rows.size());
        out.z.resize(n);
        out.a.resize(n);
        out.y.resize(n);
        out.x.resize(n, x.cols());
        for (Eigen::Index r = 0; r < n; ++r) {
            const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
            out.z[r] = z[i];
            out.a[r] = a[i];
            out.y[r] = y[i];
            out.x.row(r) = x.row(i);
        }
        out.outcome_kind = outcome_kind;
        return out;
    }
};

struct ArmCounts {
    std::size_t n11 = 0;
    std::size_t n10 = 0;
    std::size_t n00 = 0;

    std::size_t total() const { return n11 + n10 + n00; }
    std::size_t trial() const { return n11 + n10; }
    bool operator==(const ArmCounts&) const = default;
};

/// Checks every dataset invariant and returns the cell sizes.
inline ArmCounts validate(const TrialDataset& d) {
    const auto n = d.y.size();
    if (d.z.size() != n || d.a.size() != n || d.x.rows() != n)
        throw DimensionMismatch("z, a, x and y must have the same number of rows");

    ArmCounts counts;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = static_cast<std::size_t>(i);
        const int zi = d.z[i];
        const int ai = d.a[i];
        if ((zi != 0 && zi != 1) || (ai != 0 && ai != 1))
            throw InvalidRow(row, "non-binary indicator");
        if (zi == 0 && ai == 1) throw InvalidRow(row, "external treated");
        if (!std::isfinite(d.y[i])) throw InvalidRow(row, "non-finite outcome");
        for (Eigen::Index j = 0; j < d.x.cols(); ++j)
            if (!std::isfinite(d.x(i, j))) throw InvalidRow(row, "non-finite covariate");
        if (d.outcome_kind == OutcomeKind::binary && d.y[i] != 0.0 && d.y[i] != 1.0)
            throw InvalidRow(row, "non-binary outcome");

        if (zi == 1 && ai == 1)
            ++counts.n11;
        else if (zi == 1)
            ++counts.n10;
        else
            ++counts.n00;
    }
    return counts;
}

inline OutcomeKind detect_outcome_kind(const Eigen::VectorXd& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) return OutcomeKind::continuous;
    return y.size() > 0 ? OutcomeKind::binary : OutcomeKind::continuous;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view field, std::size_t line, const std::string& column) {
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double value = 0.0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (field.empty() || ec != std::errc{} || ptr != end)
        throw ParseError(line, column, "cannot parse '" + std::string(field) + "' as a number");
    return value;
}

inline int parse_indicator(std::string_view field, std::size_t line, const std::string& column,
                           std::size_t row) {
    const double v = parse_double(field, line, column);
    if (v != 0.0 && v != 1.0) throw InvalidRow(row, "non-binary indicator");
    return static_cast<int>(v);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace detail

/// Parses `z,a,y,x1,...,xp`. The outcome kind is inferred (binary iff every y
/// is 0 or 1) unless `kind_override` is given. Row indices in InvalidRow are
/// zero-based data rows; ParseError lines are one-based file lines.
inline TrialDataset read_csv(std::istream& in, std::optional<OutcomeKind> kind_override = {}) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "z", "missing header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);

    const auto header = detail::split_commas(line);
    const std::vector<std::string> required = {"z", "a", "y"};
    for (std::size_t k = 0; k < required.size(); ++k) {
        if (k >= header.size() || detail::trim(header[k]) != required[k])
            throw ParseError(1, required[k], "expected column '" + required[k] + "' at position " +
                                                 std::to_string(k + 1));
    }
    const std::size_t p = header.size() - 3;
    for (std::size_t j = 0; j < p; ++j) {
        const std::string expected = "x" + std::to_string(j + 1);
        if (detail::trim(header[3 + j]) != expected)
            throw ParseError(1, expected, "expected column '" + expected + "' at position " +
                                              std::to_string(j + 4));
    }

    std::vector<int> zs, as;
    std::vector<double> ys, xs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_commas(line);
        if (fields.size() != header.size())
            throw ParseError(line_no, fields.size() < header.size()
                                          ? (fields.size() < 3 ? required[fields.size()]
                                                               : "x" + std::to_string(fields.size() - 2))
                                          : "<extra>",
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        const std::size_t row = ys.size();
        zs.push_back(detail::parse_indicator(fields[0], line_no, "z", row));
        as.push_back(detail::parse_indicator(fields[1], line_no, "a", row));
        ys.push_back(detail::parse_double(fields[2], line_no, "y"));
        for (std::size_t j = 0; j < p; ++j)
            xs.push_back(detail::parse_double(fields[3 + j], line_no, "x" + std::to_string(j + 1)));
    }

    TrialDataset d;
    const auto n = static_cast<Eigen::Index>(ys.size());
    d.z = Eigen::Map<const Eigen::VectorXi>(zs.data(), n);
    d.a = Eigen::Map<const Eigen::VectorXi>(as.data(), n);
    d.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
    d.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs.data(), n, static_cast<Eigen::Index>(p));
    d.outcome_kind = kind_override.value_or(detect_outcome_kind(d.y));
    validate(d);
    return d;
}

inline TrialDataset read_csv(const std::string& path, std::optional<OutcomeKind> kind_override = {}) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "z", "cannot open '" + path + "'");
    return read_csv(in, kind_override);
}

/// Writes the dataset with shortest round-trip number formatting.
inline void write_csv(const TrialDataset& d, std::ostream& out) {
    out << "z,a,y";
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << ",x" << (j + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        out << d.z[i] << ',' << d.a[i] << ',' << detail::format_double(d.y[i]);
        for (Eigen::Index j = 0; j < d.x.cols(); ++j) out << ',' << detail::format_double(d.x(i, j));
        out << '\n';
    }
}

inline void write_csv(const TrialDataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(0, "z", "cannot write '" + path + "'");
    write_csv(d, out);
}

} // namespace hybridtrial
