#pragma once

#include <resin/core.hpp>
#include <resin/world.hpp>
#include <resin/optimize.hpp>
#include <resin/gp.hpp>
#include <resin/fusion.hpp>
#include <resin/network.hpp>
#include <resin/planner.hpp>
#include <resin/scenario.hpp>
#include <resin/bench.hpp>
