#pragma once

// Umbrella header.

#include "meshrec/adam.hpp"
#include "meshrec/camera.hpp"
#include "meshrec/checkpoint.hpp"
#include "meshrec/dataset.hpp"
#include "meshrec/decoder.hpp"
#include "meshrec/encoder.hpp"
#include "meshrec/hierarchy.hpp"
#include "meshrec/losses.hpp"
#include "meshrec/mesh.hpp"
#include "meshrec/metrics.hpp"
#include "meshrec/nn.hpp"
#include "meshrec/sampling.hpp"
#include "meshrec/sparse.hpp"
#include "meshrec/spiral.hpp"
#include "meshrec/tape.hpp"
#include "meshrec/templates.hpp"
#include "meshrec/tensor.hpp"
#include "meshrec/train.hpp"
#include "meshrec/train_config.hpp"
