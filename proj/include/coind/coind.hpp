#pragma once

#include "coind/diffusion.hpp"
#include "coind/evaluation.hpp"
#include "coind/experiment.hpp"
#include "coind/flow.hpp"
#include "coind/numkit.hpp"
#include "coind/sampling.hpp"
#include "coind/training.hpp"
#include "coind/world.hpp"
