#pragma once

#include "gsplab/config.hpp"
#include "gsplab/dataset.hpp"
#include "gsplab/error.hpp"
#include "gsplab/evaluator.hpp"
#include "gsplab/gradcheck.hpp"
#include "gsplab/gradient_suite.hpp"
#include "gsplab/model.hpp"
#include "gsplab/pnm.hpp"
#include "gsplab/rng.hpp"
#include "gsplab/synth.hpp"
#include "gsplab/tensor.hpp"
#include "gsplab/trainer.hpp"
