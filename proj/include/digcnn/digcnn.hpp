#pragma once

#include "digcnn/autodiff.hpp"
#include "digcnn/checkpoint.hpp"
#include "digcnn/config.hpp"
#include "digcnn/corpus.hpp"
#include "digcnn/decoder.hpp"
#include "digcnn/error.hpp"
#include "digcnn/eval.hpp"
#include "digcnn/model.hpp"
#include "digcnn/ops.hpp"
#include "digcnn/tensor.hpp"
#include "digcnn/trainer.hpp"
