#pragma once

#include "config.hpp"
#include "curves.hpp"
#include "da_eq.hpp"
#include "empirics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "reports.hpp"
#include "rt_sfe.hpp"
#include "rt_stage.hpp"
#include "scenarios.hpp"
#include "settlement.hpp"
#include "types.hpp"
