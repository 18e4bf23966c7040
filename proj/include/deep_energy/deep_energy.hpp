#pragma once

#include "deep_energy/dataset.hpp"
#include "deep_energy/error.hpp"
#include "deep_energy/eval.hpp"
#include "deep_energy/field.hpp"
#include "deep_energy/matting_energy.hpp"
#include "deep_energy/png_io.hpp"
#include "deep_energy/rng.hpp"
#include "deep_energy/seg_energy.hpp"
#include "deep_energy/solver.hpp"
#include "deep_energy/sparse.hpp"
#include "deep_energy/tensor_io.hpp"
