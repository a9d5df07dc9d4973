#pragma once

#include "subgrad/core.hpp"
#include "subgrad/diagnostics.hpp"
#include "subgrad/dynamics.hpp"
#include "subgrad/experiments.hpp"
#include "subgrad/graph_json.hpp"
#include "subgrad/reports_json.hpp"
#include "subgrad/problems.hpp"
#include "subgrad/rng.hpp"
#include "subgrad/sampling.hpp"
#include "subgrad/schedule.hpp"
#include "subgrad/setvalued.hpp"
#include "subgrad/tape.hpp"
#include "subgrad/trajectory.hpp"
