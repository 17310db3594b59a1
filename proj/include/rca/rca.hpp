// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header.

#pragma once

#include "rca/beamforming.hpp"
#include "rca/channel.hpp"
#include "rca/em_coupling.hpp"
#include "rca/geometry.hpp"
#include "rca/harness.hpp"
#include "rca/numerics.hpp"
#include "rca/optimizer.hpp"
#include "rca/random.hpp"
