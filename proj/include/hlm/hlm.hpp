// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hlm/bench.hpp"
#include "hlm/checkpoint.hpp"
#include "hlm/config.hpp"
#include "hlm/finetune.hpp"
#include "hlm/model.hpp"
#include "hlm/packing.hpp"
#include "hlm/perturb.hpp"
#include "hlm/pretrain.hpp"
#include "hlm/segment.hpp"
#include "hlm/toydata.hpp"
