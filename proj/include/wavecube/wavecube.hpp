#pragma once

// Everything except the command-line front end (wavecube/cli.hpp), which needs CLI11.

#include "wavecube/arch.hpp"
#include "wavecube/checkpoint.hpp"
#include "wavecube/data/cubes.hpp"
#include "wavecube/data/nvol.hpp"
#include "wavecube/data/phantom.hpp"
#include "wavecube/data/swc.hpp"
#include "wavecube/error.hpp"
#include "wavecube/filters.hpp"
#include "wavecube/nn/ops.hpp"
#include "wavecube/nn/tape.hpp"
#include "wavecube/nn/tensor.hpp"
#include "wavecube/parallel.hpp"
#include "wavecube/pipeline.hpp"
#include "wavecube/train.hpp"
#include "wavecube/transform.hpp"
#include "wavecube/volume.hpp"
