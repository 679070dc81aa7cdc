#pragma once

#include "trand/checkpoint.hpp"
#include "trand/config.hpp"
#include "trand/data.hpp"
#include "trand/discovery.hpp"
#include "trand/encoder.hpp"
#include "trand/errors.hpp"
#include "trand/eval.hpp"
#include "trand/experiment.hpp"
#include "trand/losses.hpp"
#include "trand/memory_bank.hpp"
#include "trand/numerics.hpp"
#include "trand/pipeline.hpp"
