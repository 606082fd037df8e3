#pragma once

#include "chemotax/asymptotics.hpp"
#include "chemotax/banded.hpp"
#include "chemotax/config.hpp"
#include "chemotax/grid.hpp"
#include "chemotax/io.hpp"
#include "chemotax/kinetics.hpp"
#include "chemotax/linear_analysis.hpp"
#include "chemotax/pitchfork.hpp"
#include "chemotax/steady.hpp"
#include "chemotax/time_sim.hpp"
