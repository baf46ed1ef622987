#pragma once

#include "icpvi/backend.hpp"
#include "icpvi/dataset.hpp"
#include "icpvi/engine.hpp"
#include "icpvi/errors.hpp"
#include "icpvi/experiment.hpp"
#include "icpvi/prompting.hpp"
#include "icpvi/pvi.hpp"
#include "icpvi/run_io.hpp"
#include "icpvi/selection.hpp"
#include "icpvi/special.hpp"
#include "icpvi/stats.hpp"
