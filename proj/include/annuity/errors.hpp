#pragma once

#include <stdexcept>
#include <string>

namespace annuity {

/// Input outside the mathematical domain of an operation (e.g. a hazard at or below its floor).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A numerical solve failed to converge.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, int level, long time_index, double residual)
        : std::runtime_error(what), level_(level), time_index_(time_index), residual_(residual) {}

    int level() const noexcept { return level_; }
    long time_index() const noexcept { return time_index_; }
    double residual() const noexcept { return residual_; }

private:
    int level_;
    long time_index_;
    double residual_;
};

/// Invalid scenario or parameter set.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A caller violated a stated contract (e.g. inadmissible controls, mislabelled surface).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace annuity
