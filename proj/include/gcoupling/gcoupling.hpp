#pragma once

#include "gcoupling/chain.hpp"
#include "gcoupling/coupler.hpp"
#include "gcoupling/errors.hpp"
#include "gcoupling/governor.hpp"
#include "gcoupling/measure.hpp"
#include "gcoupling/ppp.hpp"
#include "gcoupling/priming.hpp"
#include "gcoupling/race.hpp"
#include "gcoupling/random.hpp"
#include "gcoupling/reconstruct.hpp"
#include "gcoupling/stats.hpp"

namespace gcoupling {

inline constexpr const char* version = "0.1.0";

}  // namespace gcoupling
