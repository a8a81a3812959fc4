#ifndef TRACELAB_TRACELAB_HPP
#define TRACELAB_TRACELAB_HPP

#include "tracelab/config.hpp"
#include "tracelab/datagen.hpp"
#include "tracelab/errors.hpp"
#include "tracelab/estimators.hpp"
#include "tracelab/experiment.hpp"
#include "tracelab/ftest.hpp"
#include "tracelab/linalg.hpp"
#include "tracelab/model.hpp"
#include "tracelab/output.hpp"
#include "tracelab/parallel.hpp"
#include "tracelab/permutation.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/serialization.hpp"
#include "tracelab/theory.hpp"

#endif  // TRACELAB_TRACELAB_HPP
