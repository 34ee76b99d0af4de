#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace irgrid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVec = std::vector<int>;

// Exit-code mapping: usage errors are handled by the CLI parser (2);
// ValidationError -> 3, NumericError -> 4.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal form; stable across runs for byte-identical CSVs.
std::string format_double(double v);

}  // namespace irgrid
