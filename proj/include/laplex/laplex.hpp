#pragma once

#include "laplex/baselines.hpp"
#include "laplex/common.hpp"
#include "laplex/errors.hpp"
#include "laplex/gradients.hpp"
#include "laplex/limits.hpp"
#include "laplex/operator.hpp"
#include "laplex/oracle.hpp"
#include "laplex/scan.hpp"
