#ifndef VOXALIGN_ERRORS_HPP
#define VOXALIGN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace voxalign {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file or document. Carries human-readable location context.
class parse_error : public error {
public:
    using error::error;
};

/// Filesystem-level failure (open/read/write).
class io_error : public error {
public:
    using error::error;
};

class index_out_of_range : public error {
public:
    using error::error;
};

/// Input has no usable intensity structure (e.g. constant volume).
class degenerate_input : public error {
public:
    using error::error;
};

/// Point cloud is rank-deficient or has near-tied principal moments.
class degenerate_point_cloud : public error {
public:
    using error::error;
};

/// Pyramid schedule would produce an empty level.
class degenerate_level : public error {
public:
    using error::error;
};

/// Metric overlap collapsed: too few mapped samples remain in bounds.
class too_few_samples : public error {
public:
    using error::error;
};

class non_finite_objective : public error {
public:
    using error::error;
};

class line_search_failure : public error {
public:
    using error::error;
};

class geometry_mismatch : public error {
public:
    using error::error;
};

}  // namespace voxalign

#endif  // VOXALIGN_ERRORS_HPP
