#pragma once

#include "coind/world/attribute_space.hpp"
#include "coind/world/dataset.hpp"
#include "coind/world/gaussian_world.hpp"
#include "coind/world/oracle.hpp"
