#pragma once

#include "exfilab/attacks.hpp"
#include "exfilab/common.hpp"
#include "exfilab/config.hpp"
#include "exfilab/data.hpp"
#include "exfilab/harness.hpp"
#include "exfilab/metrics.hpp"
#include "exfilab/network.hpp"
#include "exfilab/optimizer.hpp"
#include "exfilab/rng.hpp"
#include "exfilab/sanitize.hpp"
#include "exfilab/schedule.hpp"
#include "exfilab/stego.hpp"
#include "exfilab/tensor.hpp"
#include "exfilab/train.hpp"
#include "exfilab/weights_io.hpp"
