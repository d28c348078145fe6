#pragma once

// Fully discrete minimizing movement scheme for 1-D gradient flows with
// nonlinear mobility.

#include "energy.hpp"
#include "experiment.hpp"
#include "flow.hpp"
#include "grid.hpp"
#include "mobility.hpp"
#include "solver.hpp"
