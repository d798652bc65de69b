#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace two_settle {

// Invalid input value (negative price, bad bounds, ...). Maps to exit code 1.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleError : std::runtime_error {
    InfeasibleError(const std::string& what, double shortfall_)
        : std::runtime_error(what), shortfall(shortfall_) {}
    double shortfall;
};

// Iterative procedure did not reach tolerance. Maps to exit code 2.
struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& what, std::vector<double> history_ = {})
        : std::runtime_error(what), history(std::move(history_)) {}
    std::vector<double> history;
};

// Fewer than two strategic suppliers and the competitive fallback is disabled.
struct NoCompetition : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace two_settle
