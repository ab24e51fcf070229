#pragma once

#include "milvad/error.hpp"
#include "milvad/evaluator.hpp"
#include "milvad/feature_tensor.hpp"
#include "milvad/manifest.hpp"
#include "milvad/mil_loss.hpp"
#include "milvad/optimizer.hpp"
#include "milvad/scorer.hpp"
#include "milvad/synthetic.hpp"
#include "milvad/trainer.hpp"
