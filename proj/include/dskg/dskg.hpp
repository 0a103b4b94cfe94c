#pragma once

#include "dskg/checkpoint.hpp"
#include "dskg/common.hpp"
#include "dskg/config.hpp"
#include "dskg/data.hpp"
#include "dskg/evaluator.hpp"
#include "dskg/model.hpp"
#include "dskg/sampler.hpp"
#include "dskg/tensor.hpp"
#include "dskg/toy.hpp"
#include "dskg/trainer.hpp"
#include "dskg/triple_predictor.hpp"
