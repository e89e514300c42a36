#pragma once

#include <stdexcept>
#include <string>

namespace copfrail {

// Malformed input file (bad header, unparseable row). Message names the line.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid input violating a data invariant. Message names the subject.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& msg) : std::domain_error(msg) {}
};

// An M-step or SE computation failed (singular Hessian, non-convergence, ...).
class EstimationError : public std::runtime_error {
public:
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Replication-study level failure (empty study, too many non-converged fits).
class StudyError : public std::runtime_error {
public:
    explicit StudyError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace copfrail
