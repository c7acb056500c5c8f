#pragma once

// Umbrella header for the whole library.

#include "prseg/checkpoint.hpp"
#include "prseg/data.hpp"
#include "prseg/dcsm.hpp"
#include "prseg/decoder.hpp"
#include "prseg/erf.hpp"
#include "prseg/metrics.hpp"
#include "prseg/model.hpp"
#include "prseg/nn.hpp"
#include "prseg/optim.hpp"
#include "prseg/prm.hpp"
#include "prseg/rng.hpp"
#include "prseg/rotate.hpp"
#include "prseg/tensor.hpp"
#include "prseg/train.hpp"
