#pragma once

#include "coind/evaluation/classifier.hpp"
#include "coind/evaluation/implicit_classifier.hpp"
#include "coind/evaluation/metrics.hpp"
