#pragma once

#include "dsomrl/common.hpp"
#include "dsomrl/nncore.hpp"
#include "dsomrl/dsom.hpp"
#include "dsomrl/optim.hpp"
#include "dsomrl/envs.hpp"
#include "dsomrl/agents.hpp"
#include "dsomrl/analysis.hpp"
#include "dsomrl/config.hpp"
#include "dsomrl/metrics.hpp"
#include "dsomrl/checkpoint.hpp"
#include "dsomrl/experiment.hpp"
