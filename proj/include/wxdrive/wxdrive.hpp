#pragma once

#include "wxdrive/agent.hpp"
#include "wxdrive/channel.hpp"
#include "wxdrive/config.hpp"
#include "wxdrive/decision.hpp"
#include "wxdrive/error.hpp"
#include "wxdrive/harness.hpp"
#include "wxdrive/perception.hpp"
#include "wxdrive/road.hpp"
#include "wxdrive/scenario.hpp"
#include "wxdrive/scoring.hpp"
#include "wxdrive/traffic.hpp"
#include "wxdrive/trajectory_log.hpp"
#include "wxdrive/weather.hpp"
#include "wxdrive/world.hpp"
