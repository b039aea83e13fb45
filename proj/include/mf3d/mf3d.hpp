#pragma once

#include "mf3d/camera.hpp"
#include "mf3d/capture.hpp"
#include "mf3d/error.hpp"
#include "mf3d/eval.hpp"
#include "mf3d/fusion.hpp"
#include "mf3d/geom.hpp"
#include "mf3d/hash.hpp"
#include "mf3d/image_io.hpp"
#include "mf3d/mask_cache.hpp"
#include "mf3d/parallel.hpp"
#include "mf3d/pipeline.hpp"
#include "mf3d/ply.hpp"
#include "mf3d/proposal.hpp"
#include "mf3d/render.hpp"
#include "mf3d/render_io.hpp"
#include "mf3d/spatial_grid.hpp"
#include "mf3d/synth.hpp"
