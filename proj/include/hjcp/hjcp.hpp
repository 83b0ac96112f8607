// Umbrella header.
#pragma once

#include "hjcp/convolve.hpp"
#include "hjcp/couplings.hpp"
#include "hjcp/document.hpp"
#include "hjcp/doubling.hpp"
#include "hjcp/expr.hpp"
#include "hjcp/funcspace.hpp"
#include "hjcp/operators.hpp"
#include "hjcp/penalty.hpp"
#include "hjcp/report.hpp"
#include "hjcp/resolvent.hpp"
#include "hjcp/runner.hpp"
