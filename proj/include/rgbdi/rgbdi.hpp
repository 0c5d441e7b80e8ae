#pragma once

// Everything in one include.
#include "rgbdi/bp.hpp"
#include "rgbdi/color_sampling.hpp"
#include "rgbdi/common.hpp"
#include "rgbdi/frame.hpp"
#include "rgbdi/geometry.hpp"
#include "rgbdi/image.hpp"
#include "rgbdi/io.hpp"
#include "rgbdi/kdtree.hpp"
#include "rgbdi/map_builder.hpp"
#include "rgbdi/pipeline.hpp"
#include "rgbdi/poisson.hpp"
#include "rgbdi/pose_refinement.hpp"
#include "rgbdi/synthetic.hpp"
#include "rgbdi/temporal.hpp"
