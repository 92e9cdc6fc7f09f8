#pragma once

#include "confot/conformal_engine.hpp"
#include "confot/core_types.hpp"
#include "confot/dataset_io.hpp"
#include "confot/error.hpp"
#include "confot/experiment.hpp"
#include "confot/metrics.hpp"
#include "confot/nonconformity.hpp"
#include "confot/sinkhorn_transport.hpp"
#include "confot/synthetic.hpp"
