#pragma once

#include <stdexcept>
#include <string>

namespace vasg {

/// Bad or missing input data (files, ids, formats). CLI exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lookup of an unknown user or product at query time. CLI exit code 3.
class QueryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss or gradient).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vasg
