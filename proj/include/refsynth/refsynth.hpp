#pragma once

// Umbrella header.

#include "refsynth/cli.hpp"
#include "refsynth/constraint.hpp"
#include "refsynth/eq.hpp"
#include "refsynth/heuristics.hpp"
#include "refsynth/lm.hpp"
#include "refsynth/regex.hpp"
#include "refsynth/scope_graph.hpp"
#include "refsynth/solver.hpp"
#include "refsynth/spec_io.hpp"
#include "refsynth/subst.hpp"
#include "refsynth/synthesis.hpp"
#include "refsynth/term.hpp"
