#pragma once

#include "demandlens/config.hpp"
#include "demandlens/demand_systems.hpp"
#include "demandlens/diagnostics.hpp"
#include "demandlens/differential.hpp"
#include "demandlens/domain.hpp"
#include "demandlens/errors.hpp"
#include "demandlens/inversion.hpp"
#include "demandlens/linalg.hpp"
#include "demandlens/random.hpp"
#include "demandlens/report.hpp"
