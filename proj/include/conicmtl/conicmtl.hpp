#pragma once

#include "conicmtl/block_steps.hpp"
#include "conicmtl/bounds.hpp"
#include "conicmtl/common.hpp"
#include "conicmtl/data.hpp"
#include "conicmtl/experiment.hpp"
#include "conicmtl/gram_cache.hpp"
#include "conicmtl/kernel_engine.hpp"
#include "conicmtl/model_io.hpp"
#include "conicmtl/stats.hpp"
#include "conicmtl/svm_dual.hpp"
#include "conicmtl/trainer.hpp"
#include "conicmtl/verification.hpp"
