#pragma once

#include "ler/config.hpp"
#include "ler/gradcheck.hpp"
#include "ler/ids.hpp"
#include "ler/lten.hpp"
#include "ler/metrics.hpp"
#include "ler/model.hpp"
#include "ler/nn.hpp"
#include "ler/query.hpp"
#include "ler/rng.hpp"
#include "ler/synth.hpp"
#include "ler/tensor.hpp"
#include "ler/train.hpp"
#include "ler/viz.hpp"
