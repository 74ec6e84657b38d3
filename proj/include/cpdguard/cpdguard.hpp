#pragma once

#include "cpdguard/stream_model.hpp"
#include "cpdguard/robust_baseline.hpp"
#include "cpdguard/cusum.hpp"
#include "cpdguard/pp_baselines.hpp"
#include "cpdguard/metrics.hpp"
#include "cpdguard/detectors.hpp"
#include "cpdguard/protocols.hpp"
#include "cpdguard/gating.hpp"
#include "cpdguard/synth.hpp"
#include "cpdguard/report.hpp"
