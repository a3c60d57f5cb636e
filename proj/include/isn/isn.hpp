#pragma once

// Umbrella header.

#include "isn/core.hpp"
#include "isn/dataset.hpp"
#include "isn/sampling.hpp"
#include "isn/fusion.hpp"
#include "isn/eval.hpp"
#include "isn/search.hpp"
#include "isn/pyramid_analysis.hpp"
#include "isn/sim.hpp"
#include "isn/io.hpp"
#include "isn/config.hpp"
