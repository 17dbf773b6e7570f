#pragma once

// Selective fine-tuning toolkit for semantic segmentation: normalization and
// LoRA tuning plans, parameter budgets, hybrid BCE/Dice losses, random-search
// hyperparameter optimization, and a Pre/Re/F1/IoU evaluation pipeline.

#include "sac/arch_spec.hpp"
#include "sac/common.hpp"
#include "sac/config.hpp"
#include "sac/dataset.hpp"
#include "sac/eval.hpp"
#include "sac/image.hpp"
#include "sac/lora.hpp"
#include "sac/losses.hpp"
#include "sac/manifest.hpp"
#include "sac/metrics.hpp"
#include "sac/model.hpp"
#include "sac/norm.hpp"
#include "sac/plan.hpp"
#include "sac/rng.hpp"
#include "sac/search.hpp"
#include "sac/tensor.hpp"
#include "sac/train.hpp"
