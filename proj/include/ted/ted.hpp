#pragma once

#include "ted/agent.hpp"
#include "ted/config.hpp"
#include "ted/csv.hpp"
#include "ted/dismetric.hpp"
#include "ted/envsim.hpp"
#include "ted/error.hpp"
#include "ted/gradcheck.hpp"
#include "ted/harness.hpp"
#include "ted/nncore.hpp"
#include "ted/plot.hpp"
#include "ted/replay.hpp"
#include "ted/rng.hpp"
#include "ted/synthgen.hpp"
#include "ted/tedloss.hpp"
