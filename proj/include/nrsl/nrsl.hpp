#pragma once

#include "nrsl/error.hpp"
#include "nrsl/rng.hpp"
#include "nrsl/radio_grid.hpp"
#include "nrsl/sci_codec.hpp"
#include "nrsl/phy_model.hpp"
#include "nrsl/sensing_mode2.hpp"
#include "nrsl/mode1_grants.hpp"
#include "nrsl/congestion_control.hpp"
#include "nrsl/harq.hpp"
#include "nrsl/traffic_mobility.hpp"
#include "nrsl/metrics.hpp"
#include "nrsl/sim_engine.hpp"
#include "nrsl/scenario_config.hpp"
#include "nrsl/runner.hpp"
