#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrt {

// Error taxonomy. The CLI maps these onto exit codes:
// config_error -> 2, data_error -> 3, numeric_error -> 4.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct dimension_error : error {
    using error::error;
};
struct numeric_error : error {
    using error::error;
};
struct contract_error : error {
    using error::error;
};
struct config_error : error {
    using error::error;
};
struct data_error : error {
    using error::error;
};

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline bool all_finite(const double* p, int64_t n) {
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

} // namespace mrt
