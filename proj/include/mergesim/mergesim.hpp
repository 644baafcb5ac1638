#pragma once

#include "mergesim/association.hpp"
#include "mergesim/calibrate.hpp"
#include "mergesim/core.hpp"
#include "mergesim/dataio.hpp"
#include "mergesim/geometry.hpp"
#include "mergesim/metrics.hpp"
#include "mergesim/models.hpp"
#include "mergesim/simulate.hpp"
