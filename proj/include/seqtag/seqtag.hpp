#pragma once

#include "seqtag/array.hpp"
#include "seqtag/bias_opt.hpp"
#include "seqtag/checkpoint.hpp"
#include "seqtag/config.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/crf.hpp"
#include "seqtag/decoder.hpp"
#include "seqtag/encoder.hpp"
#include "seqtag/errors.hpp"
#include "seqtag/eval.hpp"
#include "seqtag/model.hpp"
#include "seqtag/rng.hpp"
#include "seqtag/tape.hpp"
#include "seqtag/train.hpp"
