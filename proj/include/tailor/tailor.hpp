#pragma once

#include "tailor/error.hpp"
#include "tailor/data/image.hpp"
#include "tailor/data/manifest.hpp"
#include "tailor/data/synthetic.hpp"
#include "tailor/preprocess/pipeline.hpp"
#include "tailor/net/generator.hpp"
#include "tailor/net/discriminator.hpp"
#include "tailor/objectives/losses.hpp"
#include "tailor/objectives/perceptual.hpp"
#include "tailor/train/trainer.hpp"
#include "tailor/train/checkpoint.hpp"
#include "tailor/eval/metrics.hpp"
#include "tailor/eval/classifier.hpp"
#include "tailor/eval/evaluate.hpp"
#include "tailor/service/edit_service.hpp"
