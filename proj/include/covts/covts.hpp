#pragma once

#include "covts/core.hpp"
#include "covts/linalg.hpp"
#include "covts/procsim.hpp"
#include "covts/covmodels.hpp"
#include "covts/estim.hpp"
#include "covts/glasso.hpp"
#include "covts/rates.hpp"
#include "covts/io.hpp"
#include "covts/harness.hpp"
