/// Umbrella header for the library.
#pragma once

#include "pbmorl/core.hpp"
#include "pbmorl/envs.hpp"
#include "pbmorl/teacher.hpp"
#include "pbmorl/replay.hpp"
#include "pbmorl/nn.hpp"
#include "pbmorl/reward_model.hpp"
#include "pbmorl/eql.hpp"
#include "pbmorl/pareto.hpp"
#include "pbmorl/metrics.hpp"
#include "pbmorl/trainer.hpp"
#include "pbmorl/checkpoint.hpp"
#include "pbmorl/pref_service.hpp"
#include "pbmorl/run_config.hpp"
