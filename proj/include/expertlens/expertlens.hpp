#pragma once

#include "expertlens/activation_dump.hpp"
#include "expertlens/average_precision.hpp"
#include "expertlens/corpus.hpp"
#include "expertlens/domains.hpp"
#include "expertlens/error.hpp"
#include "expertlens/expert_sets.hpp"
#include "expertlens/fold_stability.hpp"
#include "expertlens/intervention.hpp"
#include "expertlens/layer_stats.hpp"
#include "expertlens/neuron_map.hpp"
#include "expertlens/parallel.hpp"
#include "expertlens/rng.hpp"
#include "expertlens/similarity.hpp"
#include "expertlens/stats.hpp"
#include "expertlens/synth.hpp"
