#pragma once

#include "uamsim/engine.hpp"
#include "uamsim/flightdyn.hpp"
#include "uamsim/hexspace.hpp"
#include "uamsim/io.hpp"
#include "uamsim/metrics.hpp"
#include "uamsim/orca.hpp"
#include "uamsim/routeplan.hpp"
#include "uamsim/scenario.hpp"
