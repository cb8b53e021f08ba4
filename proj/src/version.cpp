#include "esotune/version.hpp"

#ifndef ESOTUNE_VERSION
#define ESOTUNE_VERSION "unknown"
#endif

namespace esotune {

std::string_view code_version() { return ESOTUNE_VERSION; }

}  // namespace esotune
