#pragma once

#include <string_view>

namespace esotune {

std::string_view code_version();

}  // namespace esotune
