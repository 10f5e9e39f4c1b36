#pragma once

#include "coind/sampling/compose.hpp"
#include "coind/sampling/ddim.hpp"
#include "coind/sampling/langevin.hpp"
