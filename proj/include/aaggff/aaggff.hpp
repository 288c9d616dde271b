#pragma once

#include "aaggff/error.hpp"
#include "aaggff/simplex.hpp"
#include "aaggff/transform.hpp"
#include "aaggff/decision.hpp"
#include "aaggff/aggregators.hpp"
#include "aaggff/rng.hpp"
#include "aaggff/parallel.hpp"
#include "aaggff/model.hpp"
#include "aaggff/data.hpp"
#include "aaggff/federation.hpp"
#include "aaggff/metrics.hpp"
#include "aaggff/config.hpp"
#include "aaggff/report.hpp"
