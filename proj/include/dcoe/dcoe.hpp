#pragma once

#include "dcoe/baselines.hpp"
#include "dcoe/depmodels.hpp"
#include "dcoe/error.hpp"
#include "dcoe/fnpcontrol.hpp"
#include "dcoe/numcore.hpp"
#include "dcoe/proportion.hpp"
#include "dcoe/simharness.hpp"
#include "dcoe/stat_vector.hpp"
