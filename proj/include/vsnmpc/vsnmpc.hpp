#pragma once

#include "vsnmpc/analysis.hpp"
#include "vsnmpc/barriers.hpp"
#include "vsnmpc/camera.hpp"
#include "vsnmpc/diagnostics.hpp"
#include "vsnmpc/errors.hpp"
#include "vsnmpc/nmpc.hpp"
#include "vsnmpc/polygon.hpp"
#include "vsnmpc/scenario.hpp"
#include "vsnmpc/simulator.hpp"
#include "vsnmpc/svg.hpp"
#include "vsnmpc/target.hpp"

namespace vsnmpc {
inline constexpr const char* kVersion = "0.1.0";
}
