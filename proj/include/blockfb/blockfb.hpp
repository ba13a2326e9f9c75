#pragma once

#include "core.hpp"
#include "sampling.hpp"
#include "smoothness.hpp"
#include "problems.hpp"
#include "solver.hpp"
#include "theory.hpp"
#include "instance.hpp"
