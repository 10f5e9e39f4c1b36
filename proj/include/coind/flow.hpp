#pragma once

#include "coind/flow/link.hpp"
#include "coind/flow/velocity_ci.hpp"
