#pragma once

#include "flowbm/checkpoint.hpp"
#include "flowbm/common.hpp"
#include "flowbm/data_io.hpp"
#include "flowbm/image_io.hpp"
#include "flowbm/layout.hpp"
#include "flowbm/machine.hpp"
#include "flowbm/metrics.hpp"
#include "flowbm/mpf.hpp"
#include "flowbm/optimizer.hpp"
#include "flowbm/rng.hpp"
#include "flowbm/sampling.hpp"
#include "flowbm/state.hpp"
#include "flowbm/stdp.hpp"
#include "flowbm/training.hpp"
