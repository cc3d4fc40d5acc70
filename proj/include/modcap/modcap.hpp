#pragma once

#include "modcap/tensor.hpp"
#include "modcap/autodiff.hpp"
#include "modcap/params.hpp"
#include "modcap/checkpoint.hpp"
#include "modcap/vocab.hpp"
#include "modcap/lexicon.hpp"
#include "modcap/scene.hpp"
#include "modcap/dataset.hpp"
#include "modcap/supervision.hpp"
#include "modcap/detection.hpp"
#include "modcap/modules.hpp"
#include "modcap/model.hpp"
#include "modcap/losses.hpp"
#include "modcap/bundle.hpp"
#include "modcap/trainer.hpp"
#include "modcap/decode.hpp"
#include "modcap/metrics.hpp"
#include "modcap/experiment.hpp"
