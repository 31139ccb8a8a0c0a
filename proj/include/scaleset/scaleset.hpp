#pragma once

#include "builders.hpp"
#include "energy.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "hierarchy.hpp"
#include "plf.hpp"
#include "raster.hpp"
#include "regions.hpp"
