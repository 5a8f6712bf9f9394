#pragma once

// Umbrella header.

#include "snstf/channel.hpp"
#include "snstf/decoy.hpp"
#include "snstf/finite_key.hpp"
#include "snstf/monte_carlo.hpp"
#include "snstf/optimizer.hpp"
#include "snstf/protocol.hpp"
