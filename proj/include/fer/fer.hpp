#pragma once

// Umbrella header for the whole engine.

#include "fer/activations.hpp"
#include "fer/checkpoint.hpp"
#include "fer/classes.hpp"
#include "fer/cnn.hpp"
#include "fer/common.hpp"
#include "fer/dataset.hpp"
#include "fer/eval.hpp"
#include "fer/gradcheck.hpp"
#include "fer/image.hpp"
#include "fer/landmarks.hpp"
#include "fer/layers.hpp"
#include "fer/oracle.hpp"
#include "fer/report.hpp"
#include "fer/rng.hpp"
#include "fer/rnn.hpp"
#include "fer/selfcheck.hpp"
#include "fer/synthetic.hpp"
#include "fer/tape.hpp"
#include "fer/tensor.hpp"
