#pragma once

#include "coind/experiment/artifacts.hpp"
#include "coind/experiment/config.hpp"
#include "coind/experiment/invariants.hpp"
#include "coind/experiment/pipeline.hpp"
