#pragma once

#include "calprune/array.hpp"
#include "calprune/commands.hpp"
#include "calprune/config.hpp"
#include "calprune/data.hpp"
#include "calprune/dataset.hpp"
#include "calprune/diff_graph.hpp"
#include "calprune/digest.hpp"
#include "calprune/grad_check.hpp"
#include "calprune/losses.hpp"
#include "calprune/metrics.hpp"
#include "calprune/model.hpp"
#include "calprune/pruning.hpp"
#include "calprune/report.hpp"
#include "calprune/rng.hpp"
#include "calprune/sgd.hpp"
#include "calprune/svg.hpp"
#include "calprune/trainer.hpp"
