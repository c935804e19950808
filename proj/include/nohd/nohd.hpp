#pragma once

#include "nohd/config.hpp"
#include "nohd/dual.hpp"
#include "nohd/errors.hpp"
#include "nohd/estim.hpp"
#include "nohd/gamecore.hpp"
#include "nohd/games.hpp"
#include "nohd/harness.hpp"
#include "nohd/linalg.hpp"
#include "nohd/matrix.hpp"
#include "nohd/optim.hpp"
#include "nohd/rng.hpp"
