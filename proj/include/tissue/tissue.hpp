#pragma once
// Convenience umbrella for the whole library.

#include "tissue/cell_kit.hpp"
#include "tissue/clock.hpp"
#include "tissue/config.hpp"
#include "tissue/core.hpp"
#include "tissue/engine.hpp"
#include "tissue/experiment.hpp"
#include "tissue/net.hpp"
#include "tissue/policy.hpp"
#include "tissue/replay.hpp"
#include "tissue/rng.hpp"
#include "tissue/server.hpp"
#include "tissue/synth.hpp"
#include "tissue/syscalls.hpp"
#include "tissue/twocell.hpp"
#include "tissue/wire.hpp"
