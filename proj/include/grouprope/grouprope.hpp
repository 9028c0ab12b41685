#pragma once

#include "grouprope/backbone.hpp"
#include "grouprope/conditioning.hpp"
#include "grouprope/ge_rope.hpp"
#include "grouprope/grid.hpp"
#include "grouprope/identity_rope.hpp"
#include "grouprope/io.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/manifest.hpp"
#include "grouprope/pipeline.hpp"
#include "grouprope/rope_core.hpp"
#include "grouprope/sampler.hpp"
#include "grouprope/viz.hpp"
