#pragma once

#include "coind/training/losses.hpp"
#include "coind/training/trainer.hpp"
