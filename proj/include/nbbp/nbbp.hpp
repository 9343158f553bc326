#pragma once

#include "nbbp/betaprime.hpp"
#include "nbbp/csv_io.hpp"
#include "nbbp/cure_model.hpp"
#include "nbbp/dataset.hpp"
#include "nbbp/errors.hpp"
#include "nbbp/fit.hpp"
#include "nbbp/influence.hpp"
#include "nbbp/likelihood.hpp"
#include "nbbp/residual_km.hpp"
#include "nbbp/rng.hpp"
#include "nbbp/simulate.hpp"
#include "nbbp/special_fn.hpp"
