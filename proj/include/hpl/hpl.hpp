#pragma once

#include "hpl/bench.hpp"
#include "hpl/config.hpp"
#include "hpl/delay_model.hpp"
#include "hpl/error.hpp"
#include "hpl/history_buffer.hpp"
#include "hpl/horizon.hpp"
#include "hpl/linalg.hpp"
#include "hpl/neural_horizon.hpp"
#include "hpl/plant.hpp"
#include "hpl/rng.hpp"
#include "hpl/stability_margins.hpp"
#include "hpl/tensor_container.hpp"
