#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hybridtrial {

/// Broad classes of failure. The CLI maps `validation` to exit code 2 and
/// `numerical` to exit code 3.
enum class ErrorCategory { validation, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class InvalidRow : public Error {
public:
    InvalidRow(std::size_t index, std::string reason)
        : Error(ErrorCategory::validation,
                "InvalidRow(" + std::to_string(index) + ", \"" + reason + "\")"),
          index_(index), reason_(std::move(reason)) {}

    std::size_t index() const noexcept { return index_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t index_;
    std::string reason_;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, std::string column, const std::string& detail)
        : Error(ErrorCategory::validation,
                "ParseError(line " + std::to_string(line) + ", column '" + column + "'): " + detail),
          line_(line), column_(std::move(column)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::string column_;
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& detail)
        : Error(ErrorCategory::validation, "DimensionMismatch: " + detail) {}
};

class EmptyCell : public Error {
public:
    EmptyCell(int z, int a)
        : Error(ErrorCategory::validation,
                "EmptyCell(z=" + std::to_string(z) + ", a=" + std::to_string(a) + ")"),
          z_(z), a_(a) {}

    int z() const noexcept { return z_; }
    int a() const noexcept { return a_; }

private:
    int z_;
    int a_;
};

class RankDeficient : public Error {
public:
    explicit RankDeficient(double smallest)
        : Error(ErrorCategory::numerical,
                "RankDeficient(smallest pivot " + std::to_string(smallest) + ")"),
          smallest_(smallest) {}

    double smallest() const noexcept { return smallest_; }

private:
    double smallest_;
};

class Separation : public Error {
public:
    explicit Separation(const std::string& detail)
        : Error(ErrorCategory::numerical, "Separation: " + detail) {}
};

class NoConvergence : public Error {
public:
    explicit NoConvergence(int max_iter)
        : Error(ErrorCategory::numerical,
                "NoConvergence(" + std::to_string(max_iter) + " iterations)"),
          max_iter_(max_iter) {}

    int max_iter() const noexcept { return max_iter_; }

private:
    int max_iter_;
};

class OverlapViolation : public Error {
public:
    explicit OverlapViolation(std::size_t index, const std::string& detail = {})
        : Error(ErrorCategory::numerical,
                "OverlapViolation(" + std::to_string(index) + ")" +
                    (detail.empty() ? std::string{} : ": " + detail)),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class DegenerateResiduals : public Error {
public:
    explicit DegenerateResiduals(double sum_sq)
        : Error(ErrorCategory::numerical,
                "DegenerateResiduals(sum of squared membership residuals " +
                    std::to_string(sum_sq) + ")") {}
};

class DegenerateDenominator : public Error {
public:
    explicit DegenerateDenominator(double value)
        : Error(ErrorCategory::numerical,
                "DegenerateDenominator(" + std::to_string(value) + ")") {}
};

class TooManyFailures : public Error {
public:
    TooManyFailures(std::size_t failed, std::size_t total)
        : Error(ErrorCategory::numerical,
                "TooManyFailures(" + std::to_string(failed) + " of " +
                    std::to_string(total) + " replicates failed)"),
          failed_(failed), total_(total) {}

    std::size_t failed() const noexcept { return failed_; }
    std::size_t total() const noexcept { return total_; }

private:
    std::size_t failed_;
    std::size_t total_;
};

class BracketFailure : public Error {
public:
    explicit BracketFailure(const std::string& detail)
        : Error(ErrorCategory::numerical, "BracketFailure: " + detail) {}
};

} // namespace hybridtrial
