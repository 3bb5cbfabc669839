#ifndef VPFB_VPFB_HPP
#define VPFB_VPFB_HPP

#include "vpfb/autodiff.hpp"
#include "vpfb/checkpoint.hpp"
#include "vpfb/config.hpp"
#include "vpfb/csv.hpp"
#include "vpfb/data.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/eval.hpp"
#include "vpfb/loss.hpp"
#include "vpfb/mixture_oracle.hpp"
#include "vpfb/optimizer.hpp"
#include "vpfb/perturbation.hpp"
#include "vpfb/poisson1d.hpp"
#include "vpfb/samplers.hpp"
#include "vpfb/schedule.hpp"
#include "vpfb/trainer.hpp"
#include "vpfb/verify.hpp"

#endif  // VPFB_VPFB_HPP
