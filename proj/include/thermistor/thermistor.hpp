#pragma once

#include "thermistor/coefficients.hpp"
#include "thermistor/coupled.hpp"
#include "thermistor/error.hpp"
#include "thermistor/field_io.hpp"
#include "thermistor/field_ops.hpp"
#include "thermistor/grid.hpp"
#include "thermistor/linear_solver.hpp"
#include "thermistor/poisson.hpp"
#include "thermistor/px_laplace.hpp"
#include "thermistor/regularity.hpp"
#include "thermistor/runner/config.hpp"
#include "thermistor/runner/runner.hpp"
