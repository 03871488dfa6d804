#pragma once

// Umbrella header: spherical mixed p-spin models with heavy-tailed disorder.

#include "pspin/disorder.hpp"
#include "pspin/errors.hpp"
#include "pspin/experiments.hpp"
#include "pspin/montecarlo.hpp"
#include "pspin/multiset.hpp"
#include "pspin/nim.hpp"
#include "pspin/parisi.hpp"
#include "pspin/rng.hpp"
#include "pspin/spike_bulk.hpp"
#include "pspin/stats.hpp"
#include "pspin/tap.hpp"
#include "pspin/tails.hpp"
