#ifndef INCLUDE_SRGP_SRGP_HPP_
#define INCLUDE_SRGP_SRGP_HPP_

#include "srgp/batch_reference.hpp"
#include "srgp/checkpoint.hpp"
#include "srgp/data.hpp"
#include "srgp/errors.hpp"
#include "srgp/gradient_check.hpp"
#include "srgp/gradient_propagation.hpp"
#include "srgp/hyperparameters.hpp"
#include "srgp/kernel.hpp"
#include "srgp/linalg.hpp"
#include "srgp/metrics.hpp"
#include "srgp/optimizer.hpp"
#include "srgp/recursive_inference.hpp"
#include "srgp/sparse_model.hpp"

#endif
