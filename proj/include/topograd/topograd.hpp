#pragma once

#include "topograd/checks.hpp"
#include "topograd/fem.hpp"
#include "topograd/generator.hpp"
#include "topograd/gradcheck.hpp"
#include "topograd/io.hpp"
#include "topograd/ops.hpp"
#include "topograd/optim.hpp"
#include "topograd/problems.hpp"
#include "topograd/sparse.hpp"
#include "topograd/tape.hpp"
#include "topograd/tensor.hpp"
