#pragma once

#include "coind/diffusion/conditioning.hpp"
#include "coind/diffusion/schedule.hpp"
#include "coind/diffusion/score_net.hpp"
