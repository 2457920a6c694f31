#pragma once

// Umbrella header.

#include "tinydesc/augment.hpp"
#include "tinydesc/errors.hpp"
#include "tinydesc/eval.hpp"
#include "tinydesc/fht.hpp"
#include "tinydesc/image.hpp"
#include "tinydesc/io.hpp"
#include "tinydesc/net.hpp"
#include "tinydesc/parallel.hpp"
#include "tinydesc/patches.hpp"
#include "tinydesc/rng.hpp"
#include "tinydesc/synth.hpp"
#include "tinydesc/tensor.hpp"
#include "tinydesc/train.hpp"
