#pragma once

#include "gmap/common.hpp"
#include "gmap/deform.hpp"
#include "gmap/formats.hpp"
#include "gmap/harmonic.hpp"
#include "gmap/losses.hpp"
#include "gmap/mesh.hpp"
#include "gmap/metrics.hpp"
#include "gmap/net_shapes.hpp"
#include "gmap/obj_io.hpp"
#include "gmap/rigid.hpp"
#include "gmap/sampling.hpp"
#include "gmap/synthetic.hpp"
