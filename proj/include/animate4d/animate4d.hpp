#pragma once

#include "animate4d/core/error.hpp"
#include "animate4d/core/io.hpp"
#include "animate4d/core/mlp.hpp"
#include "animate4d/core/parallel.hpp"
#include "animate4d/core/params.hpp"
#include "animate4d/core/png.hpp"
#include "animate4d/core/quaternion.hpp"
#include "animate4d/core/types.hpp"
#include "animate4d/harness/config.hpp"
#include "animate4d/harness/eval.hpp"
#include "animate4d/harness/pipeline.hpp"
#include "animate4d/harness/synth.hpp"
#include "animate4d/hexplane/field.hpp"
#include "animate4d/losses/arap.hpp"
#include "animate4d/losses/recon.hpp"
#include "animate4d/losses/sds.hpp"
#include "animate4d/mesh/mesh.hpp"
#include "animate4d/mvvdm/attention.hpp"
#include "animate4d/mvvdm/blobs.hpp"
#include "animate4d/mvvdm/denoiser.hpp"
#include "animate4d/mvvdm/latent.hpp"
#include "animate4d/optim/adam.hpp"
#include "animate4d/optim/motion.hpp"
#include "animate4d/render/splat.hpp"
