#pragma once

#include <stdexcept>
#include <string>

namespace kolmo {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// wrong representation tag, bad argument shape
struct contract_violation : error {
    using error::error;
};

// block or packet beyond what the grid resolves
struct out_of_range_error : error {
    using error::error;
};

// invalid parameters, unstable step
struct config_error : error {
    using error::error;
};

struct precondition_violation : error {
    using error::error;
};

struct numerical_error : error {
    using error::error;
};

struct insufficient_data : error {
    using error::error;
};

struct undefined_ratio : error {
    using error::error;
};

struct cost_cap_exceeded : error {
    double estimate = 0.0;
    cost_cap_exceeded(const std::string& what, double est) : error(what), estimate(est) {}
};

} // namespace kolmo
