#pragma once

#include "edgedet/accounting.hpp"
#include "edgedet/batchnorm_fold.hpp"
#include "edgedet/builder.hpp"
#include "edgedet/container.hpp"
#include "edgedet/engine.hpp"
#include "edgedet/error.hpp"
#include "edgedet/graph.hpp"
#include "edgedet/metrics.hpp"
#include "edgedet/planner.hpp"
#include "edgedet/postprocess.hpp"
#include "edgedet/prune.hpp"
#include "edgedet/quant/calibrate.hpp"
#include "edgedet/quant/int8_engine.hpp"
#include "edgedet/quant/quantize.hpp"
#include "edgedet/quant/requant.hpp"
#include "edgedet/report.hpp"
#include "edgedet/shape_inference.hpp"
#include "edgedet/tensor.hpp"
