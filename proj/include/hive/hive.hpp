#pragma once

#include "hive/common.hpp"
#include "hive/csv.hpp"
#include "hive/factor_recovery.hpp"
#include "hive/group_lasso.hpp"
#include "hive/pipeline.hpp"
#include "hive/ridge_smoother.hpp"
#include "hive/rng.hpp"
#include "hive/sim_bench.hpp"
#include "hive/stage1.hpp"
#include "hive/tuning.hpp"

namespace hive {
inline constexpr const char* version = "0.1.0";
}
