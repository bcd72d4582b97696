#ifndef CBMA_ERRORS_HPP
#define CBMA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cbma {

// Exit-code categories used by the CLI: config -> 2, data -> 3, numeric -> 4.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct degenerate_basis_error : numeric_error {
    using numeric_error::numeric_error;
};

struct degenerate_evidence_error : numeric_error {
    using numeric_error::numeric_error;
};

struct degenerate_weight_error : numeric_error {
    using numeric_error::numeric_error;
};

struct grid_quality_error : numeric_error {
    using numeric_error::numeric_error;
};

struct grid_truncation_error : numeric_error {
    using numeric_error::numeric_error;
};

struct grid_mismatch_error : numeric_error {
    using numeric_error::numeric_error;
};

struct unsupported_oracle_error : numeric_error {
    using numeric_error::numeric_error;
};

} // namespace cbma

#endif
