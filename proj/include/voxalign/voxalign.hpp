#ifndef VOXALIGN_VOXALIGN_HPP
#define VOXALIGN_VOXALIGN_HPP

// Umbrella header for the multimodal volume registration toolkit.

#include "voxalign/em_cluster.hpp"
#include "voxalign/errors.hpp"
#include "voxalign/eval.hpp"
#include "voxalign/geometry.hpp"
#include "voxalign/interpolation.hpp"
#include "voxalign/landmarks.hpp"
#include "voxalign/metaimage.hpp"
#include "voxalign/mi_metric.hpp"
#include "voxalign/optim.hpp"
#include "voxalign/pca_init.hpp"
#include "voxalign/pgm.hpp"
#include "voxalign/phantom.hpp"
#include "voxalign/pipeline.hpp"
#include "voxalign/pyramid.hpp"
#include "voxalign/resample.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/transform_io.hpp"
#include "voxalign/transforms.hpp"
#include "voxalign/volume.hpp"

#endif  // VOXALIGN_VOXALIGN_HPP
