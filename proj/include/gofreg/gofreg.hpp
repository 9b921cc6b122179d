#pragma once

#include "gofreg/bootstrap.hpp"
#include "gofreg/data_io.hpp"
#include "gofreg/dataset.hpp"
#include "gofreg/dgp.hpp"
#include "gofreg/error.hpp"
#include "gofreg/families.hpp"
#include "gofreg/fit.hpp"
#include "gofreg/gof_tests.hpp"
#include "gofreg/parallel.hpp"
#include "gofreg/rng.hpp"
