#pragma once

#include <stdexcept>
#include <string>

namespace hemi {

// Exit codes reported by the command-line front end.
enum class exit_code : int {
    success = 0,
    usage = 1,
    data = 2,
    numeric = 3,
};

// Bad configuration, flags, or arguments.
class usage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input data: files, labels, graph structure, meta-paths.
class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape mismatches and non-finite values during computation.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A meta-path whose relation sequence does not type-check.
// position is the index of the offending relation (or of the endpoint check).
class metapath_type_error : public data_error {
public:
    metapath_type_error(std::size_t position, const std::string& what)
        : data_error(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

}  // namespace hemi
