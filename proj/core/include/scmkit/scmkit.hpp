#pragma once

#include "scmkit/error.hpp"
#include "scmkit/inference.hpp"
#include "scmkit/panel.hpp"
#include "scmkit/report.hpp"
#include "scmkit/rng.hpp"
#include "scmkit/simlab.hpp"
#include "scmkit/solver.hpp"
#include "scmkit/study.hpp"
