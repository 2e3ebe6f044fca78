#pragma once

// Umbrella header.

#include "igsense/bayes.hpp"
#include "igsense/cg.hpp"
#include "igsense/commands.hpp"
#include "igsense/config.hpp"
#include "igsense/core.hpp"
#include "igsense/csv.hpp"
#include "igsense/elliptic.hpp"
#include "igsense/fem.hpp"
#include "igsense/gsa.hpp"
#include "igsense/hdsa.hpp"
#include "igsense/model.hpp"
#include "igsense/oracle.hpp"
#include "igsense/parallel.hpp"
#include "igsense/prior.hpp"
#include "igsense/randeig.hpp"
#include "igsense/rng.hpp"
#include "igsense/twobytwo.hpp"
