#pragma once

#include "ssp3d/adam.hpp"
#include "ssp3d/autodiff.hpp"
#include "ssp3d/bank.hpp"
#include "ssp3d/checkpoint.hpp"
#include "ssp3d/config.hpp"
#include "ssp3d/errors.hpp"
#include "ssp3d/eval.hpp"
#include "ssp3d/fewshot.hpp"
#include "ssp3d/image.hpp"
#include "ssp3d/kmeans.hpp"
#include "ssp3d/models.hpp"
#include "ssp3d/nn.hpp"
#include "ssp3d/plots.hpp"
#include "ssp3d/prototype.hpp"
#include "ssp3d/rng.hpp"
#include "ssp3d/synthdata.hpp"
#include "ssp3d/tensor.hpp"
#include "ssp3d/trainer.hpp"
#include "ssp3d/voxel.hpp"
