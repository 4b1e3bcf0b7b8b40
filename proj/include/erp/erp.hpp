#pragma once

#include "erp/dataio.hpp"
#include "erp/ensemble.hpp"
#include "erp/error.hpp"
#include "erp/eval.hpp"
#include "erp/keyvalue.hpp"
#include "erp/nn.hpp"
#include "erp/rng.hpp"
#include "erp/sigproc.hpp"
#include "erp/synth.hpp"
#include "erp/types.hpp"
