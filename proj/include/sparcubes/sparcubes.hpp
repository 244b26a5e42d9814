#pragma once

#include "bvh.hpp"
#include "common.hpp"
#include "deform_opt.hpp"
#include "geometry.hpp"
#include "hole_fill.hpp"
#include "mesh_io.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "render_refine.hpp"
#include "sign_field.hpp"
#include "sparse_grid.hpp"
#include "surface_extract.hpp"
