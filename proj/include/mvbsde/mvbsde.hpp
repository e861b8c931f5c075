#pragma once

#include "mvbsde/config.hpp"
#include "mvbsde/convex.hpp"
#include "mvbsde/core.hpp"
#include "mvbsde/ensemble.hpp"
#include "mvbsde/generator.hpp"
#include "mvbsde/io.hpp"
#include "mvbsde/martingale.hpp"
#include "mvbsde/mollifier.hpp"
#include "mvbsde/oracle.hpp"
#include "mvbsde/regression.hpp"
#include "mvbsde/rng.hpp"
#include "mvbsde/solver.hpp"
#include "mvbsde/verify.hpp"
