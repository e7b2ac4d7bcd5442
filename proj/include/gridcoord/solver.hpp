#pragma once

#include "gridcoord/solver/problem.hpp"
#include "gridcoord/solver/simplex.hpp"
#include "gridcoord/solver/branch_and_bound.hpp"
#include "gridcoord/solver/active_set_qp.hpp"
