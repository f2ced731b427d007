#pragma once

// Umbrella header for the temporal action localization library.

#include "asl/assignment.hpp"
#include "asl/config.hpp"
#include "asl/data.hpp"
#include "asl/errors.hpp"
#include "asl/eval.hpp"
#include "asl/gradcheck.hpp"
#include "asl/gradsuite.hpp"
#include "asl/inference.hpp"
#include "asl/io.hpp"
#include "asl/losses.hpp"
#include "asl/matrix.hpp"
#include "asl/model.hpp"
#include "asl/numerics.hpp"
#include "asl/pipeline.hpp"
#include "asl/rng.hpp"
#include "asl/sensitivity.hpp"
#include "asl/tape.hpp"
#include "asl/trainer.hpp"
#include "asl/types.hpp"
