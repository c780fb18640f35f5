// Umbrella header.

#pragma once

#include "dorm/csv.hpp"
#include "dorm/data.hpp"
#include "dorm/density_ratio.hpp"
#include "dorm/dr_estimation.hpp"
#include "dorm/errors.hpp"
#include "dorm/group_dro.hpp"
#include "dorm/mixture_weights.hpp"
#include "dorm/model_json.hpp"
#include "dorm/pipeline.hpp"
#include "dorm/regressors.hpp"
#include "dorm/rng.hpp"
#include "dorm/sim_defaults.hpp"
#include "dorm/simulation.hpp"
#include "dorm/tuning.hpp"
