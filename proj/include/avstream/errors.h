#pragma once

#include <stdexcept>
#include <string>

namespace avs {

// Bad user-facing configuration (CLI exit code 2).
struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Tensor / sequence shape disagreement.
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite activation or loss; carries the layer it was first seen in
// so the stability harness can attribute the blow-up.
struct numeric_error : std::runtime_error {
    int layer = -1;
    numeric_error(const std::string& what, int layer_index)
        : std::runtime_error(what), layer(layer_index) {}
};

}  // namespace avs
