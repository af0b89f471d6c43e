#pragma once

#include "timeshift/config.hpp"
#include "timeshift/data_model.hpp"
#include "timeshift/error.hpp"
#include "timeshift/evaluation.hpp"
#include "timeshift/explain.hpp"
#include "timeshift/features.hpp"
#include "timeshift/logistic.hpp"
#include "timeshift/parallel.hpp"
#include "timeshift/random.hpp"
#include "timeshift/simulator.hpp"
#include "timeshift/text.hpp"
