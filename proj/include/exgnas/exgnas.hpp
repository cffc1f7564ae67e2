#pragma once

#include "exgnas/architecture.hpp"
#include "exgnas/autodiff.hpp"
#include "exgnas/evaluator.hpp"
#include "exgnas/explain.hpp"
#include "exgnas/grad_check.hpp"
#include "exgnas/graph.hpp"
#include "exgnas/mcts.hpp"
#include "exgnas/metrics.hpp"
#include "exgnas/model.hpp"
#include "exgnas/optim.hpp"
#include "exgnas/synthetic.hpp"
#include "exgnas/tensor.hpp"
#include "exgnas/train.hpp"
