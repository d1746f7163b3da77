#pragma once

#include "nn/loss.hpp"
#include "nn/ops.hpp"
#include "nn/optim.hpp"
#include "nn/tensor.hpp"
