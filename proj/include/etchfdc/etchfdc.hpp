#pragma once

#include "etchfdc/common.hpp"
#include "etchfdc/core.hpp"
#include "etchfdc/csv.hpp"
#include "etchfdc/doe.hpp"
#include "etchfdc/fdc.hpp"
#include "etchfdc/gasel.hpp"
#include "etchfdc/persist.hpp"
#include "etchfdc/pipeline.hpp"
#include "etchfdc/pretreat.hpp"
#include "etchfdc/regress.hpp"
#include "etchfdc/simulate.hpp"
#include "etchfdc/vsensor.hpp"
