#pragma once

#include "skillstep/common.hpp"
#include "skillstep/tensor.hpp"
#include "skillstep/tape.hpp"
#include "skillstep/nn.hpp"
#include "skillstep/maze.hpp"
#include "skillstep/dataset.hpp"
#include "skillstep/bundle.hpp"
#include "skillstep/skill.hpp"
#include "skillstep/latent.hpp"
#include "skillstep/policy.hpp"
#include "skillstep/rollout.hpp"
#include "skillstep/config.hpp"
#include "skillstep/metrics.hpp"
#include "skillstep/checkpoint.hpp"
#include "skillstep/trainer.hpp"
