#pragma once

#include "srf/error.hpp"
#include "srf/grid.hpp"
#include "srf/directive/lexicon.hpp"
#include "srf/directive/parser.hpp"
#include "srf/directive/script_io.hpp"
#include "srf/layout/bbox.hpp"
#include "srf/layout/constraints.hpp"
#include "srf/layout/mask.hpp"
#include "srf/layout/report_io.hpp"
#include "srf/layout/solver.hpp"
#include "srf/diffusion/ddim.hpp"
#include "srf/diffusion/external_denoiser.hpp"
#include "srf/diffusion/latent_io.hpp"
#include "srf/diffusion/reference_denoiser.hpp"
#include "srf/engine/pipeline.hpp"
