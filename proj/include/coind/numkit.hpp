#pragma once

#include "coind/numkit/adam.hpp"
#include "coind/numkit/checkpoint.hpp"
#include "coind/numkit/dense_net.hpp"
#include "coind/numkit/error.hpp"
#include "coind/numkit/matrix.hpp"
#include "coind/numkit/rng.hpp"
