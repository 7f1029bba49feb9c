#pragma once

#include "mssl/baselines.hpp"
#include "mssl/common.hpp"
#include "mssl/data.hpp"
#include "mssl/estimator.hpp"
#include "mssl/glasso_admm.hpp"
#include "mssl/losses.hpp"
#include "mssl/model.hpp"
#include "mssl/model_selection.hpp"
#include "mssl/parallel.hpp"
#include "mssl/prox.hpp"
#include "mssl/synthetic.hpp"
#include "mssl/wstep.hpp"
