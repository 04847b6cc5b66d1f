#pragma once

#include "smio/linalg.hpp"
#include "smio/model.hpp"
#include "smio/riccati.hpp"
#include "smio/decomposition.hpp"
#include "smio/observer.hpp"
#include "smio/modeguard.hpp"
#include "smio/sim.hpp"
#include "smio/io.hpp"
