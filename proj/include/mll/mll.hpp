#pragma once

// Umbrella header for the margin loss library.

#include "mll/config.hpp"
#include "mll/errors.hpp"
#include "mll/gradcheck.hpp"
#include "mll/io.hpp"
#include "mll/loss.hpp"
#include "mll/margins.hpp"
#include "mll/matrix.hpp"
#include "mll/metrics.hpp"
#include "mll/pipeline.hpp"
#include "mll/rng.hpp"
#include "mll/svg.hpp"
#include "mll/toy.hpp"
