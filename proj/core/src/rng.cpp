#include "qkdlab/rng.hpp"

// Header-only; this TU exists so the header is compiled standalone.
