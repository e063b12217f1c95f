#pragma once

#include "saccade/commands.hpp"
#include "saccade/container.hpp"
#include "saccade/harness.hpp"
#include "saccade/image.hpp"
#include "saccade/rng.hpp"
#include "saccade/saccade_engine.hpp"
#include "saccade/saliency.hpp"
#include "saccade/tensorops.hpp"
#include "saccade/toy.hpp"
#include "saccade/vit.hpp"
