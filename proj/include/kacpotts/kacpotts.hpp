#ifndef KACPOTTS_KACPOTTS_HPP
#define KACPOTTS_KACPOTTS_HPP

#include "config.hpp"
#include "convolution.hpp"
#include "error.hpp"
#include "experiments.hpp"
#include "fuzzy.hpp"
#include "kernel.hpp"
#include "meanfield.hpp"
#include "output.hpp"
#include "parallel.hpp"
#include "potts.hpp"
#include "profile_io.hpp"
#include "profiles.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "torus.hpp"
#include "variational.hpp"

#endif
