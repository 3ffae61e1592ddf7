// SPDX-License-Identifier: Apache-2.0
//
// oddm-chanest: delay-Doppler channel estimation toolkit for ODDM waveforms
// ------------------------------------------------------------------------

#pragma once

#include "oddm/core.hpp"
#include "oddm/txrx.hpp"
#include "oddm/pilot.hpp"
#include "oddm/estimate.hpp"
#include "oddm/sbl.hpp"
#include "oddm/refine.hpp"
#include "oddm/tgraesbi.hpp"
#include "oddm/evaluation.hpp"
#include "oddm/harness.hpp"
