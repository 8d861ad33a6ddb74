#pragma once

#include "jepa3d/ablation.hpp"
#include "jepa3d/checkpoint.hpp"
#include "jepa3d/cloud_io.hpp"
#include "jepa3d/config.hpp"
#include "jepa3d/data.hpp"
#include "jepa3d/eval.hpp"
#include "jepa3d/features.hpp"
#include "jepa3d/geometry.hpp"
#include "jepa3d/model.hpp"
#include "jepa3d/objective.hpp"
#include "jepa3d/plot.hpp"
#include "jepa3d/pretrain.hpp"
#include "jepa3d/sampler.hpp"
#include "jepa3d/synthetic.hpp"
#include "jepa3d/tokenizer.hpp"
