#pragma once

#include "hapticmesh/collision.hpp"
#include "hapticmesh/device.hpp"
#include "hapticmesh/discovery.hpp"
#include "hapticmesh/endpoint.hpp"
#include "hapticmesh/error.hpp"
#include "hapticmesh/gestures.hpp"
#include "hapticmesh/haptics.hpp"
#include "hapticmesh/math.hpp"
#include "hapticmesh/metrics.hpp"
#include "hapticmesh/scenario.hpp"
#include "hapticmesh/session.hpp"
#include "hapticmesh/topology.hpp"
#include "hapticmesh/trace.hpp"
#include "hapticmesh/wire.hpp"
