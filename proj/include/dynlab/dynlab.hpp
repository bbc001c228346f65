#pragma once

#include "dynlab/errors.hpp"
#include "dynlab/tensor.hpp"
#include "dynlab/rng.hpp"
#include "dynlab/soft_labels.hpp"
#include "dynlab/network.hpp"
#include "dynlab/loss.hpp"
#include "dynlab/sgd.hpp"
#include "dynlab/binary_io.hpp"
#include "dynlab/checkpoint.hpp"
#include "dynlab/labelbank.hpp"
#include "dynlab/dataset.hpp"
#include "dynlab/formats.hpp"
#include "dynlab/noisytools.hpp"
#include "dynlab/training.hpp"
#include "dynlab/metaloop.hpp"
#include "dynlab/baselines.hpp"
#include "dynlab/distill.hpp"
#include "dynlab/config.hpp"
#include "dynlab/experiment.hpp"
