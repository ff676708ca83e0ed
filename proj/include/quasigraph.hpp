#pragma once

#include "quasigraph/atlas.hpp"
#include "quasigraph/box_dimension.hpp"
#include "quasigraph/circle.hpp"
#include "quasigraph/config.hpp"
#include "quasigraph/cylinders.hpp"
#include "quasigraph/error.hpp"
#include "quasigraph/experiments.hpp"
#include "quasigraph/expression.hpp"
#include "quasigraph/fibre_ops.hpp"
#include "quasigraph/invariant_graph.hpp"
#include "quasigraph/io.hpp"
#include "quasigraph/markov_map.hpp"
#include "quasigraph/parallel.hpp"
#include "quasigraph/rng.hpp"
#include "quasigraph/skew_family.hpp"
#include "quasigraph/thermodynamics.hpp"
