#pragma once

// Umbrella header.

#include "mrfm/assembly.hpp"
#include "mrfm/attention.hpp"
#include "mrfm/basis_cache.hpp"
#include "mrfm/common.hpp"
#include "mrfm/descriptors.hpp"
#include "mrfm/eigensolver.hpp"
#include "mrfm/embedding.hpp"
#include "mrfm/eval.hpp"
#include "mrfm/fmap.hpp"
#include "mrfm/laplacian.hpp"
#include "mrfm/matrix_io.hpp"
#include "mrfm/mesh.hpp"
#include "mrfm/mesh_io.hpp"
#include "mrfm/pipeline.hpp"
#include "mrfm/spectral.hpp"
