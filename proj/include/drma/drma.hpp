#pragma once

#include "bootstrap.hpp"
#include "dataset.hpp"
#include "dee.hpp"
#include "error.hpp"
#include "kernel.hpp"
#include "mave.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "regression.hpp"
#include "rng.hpp"
#include "sdr.hpp"
#include "simulation.hpp"
#include "statistic.hpp"
