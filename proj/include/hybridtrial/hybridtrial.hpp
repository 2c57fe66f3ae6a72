#pragma once

#include "hybridtrial/error.hpp"
#include "hybridtrial/rng.hpp"
#include "hybridtrial/stats.hpp"
#include "hybridtrial/trial_data.hpp"
#include "hybridtrial/linmod.hpp"
#include "hybridtrial/propensity.hpp"
#include "hybridtrial/bias_model.hpp"
#include "hybridtrial/outcome_models.hpp"
#include "hybridtrial/estimators.hpp"
#include "hybridtrial/inference.hpp"
#include "hybridtrial/simulation.hpp"
