#pragma once

#include "regime_riccati/cone.hpp"
#include "regime_riccati/errors.hpp"
#include "regime_riccati/esre.hpp"
#include "regime_riccati/lq_control.hpp"
#include "regime_riccati/market.hpp"
#include "regime_riccati/market_io.hpp"
#include "regime_riccati/mean_variance.hpp"
#include "regime_riccati/simulator.hpp"
#include "regime_riccati/toml_lite.hpp"
#include "regime_riccati/types.hpp"
