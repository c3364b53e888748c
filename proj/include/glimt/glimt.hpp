#pragma once

#include "glimt/attention.hpp"
#include "glimt/bound.hpp"
#include "glimt/checkpoint.hpp"
#include "glimt/data.hpp"
#include "glimt/errors.hpp"
#include "glimt/formats.hpp"
#include "glimt/gradcheck.hpp"
#include "glimt/lstm.hpp"
#include "glimt/model.hpp"
#include "glimt/objective.hpp"
#include "glimt/render.hpp"
#include "glimt/rng.hpp"
#include "glimt/tape.hpp"
#include "glimt/tensor.hpp"
#include "glimt/train.hpp"
