#pragma once

#include "common.hpp"
#include "dtw.hpp"
#include "embed.hpp"
#include "entropy.hpp"
#include "export.hpp"
#include "kernel.hpp"
#include "landmark.hpp"
#include "mds.hpp"
#include "pca.hpp"
#include "potential.hpp"
#include "spectral.hpp"
#include "synth.hpp"
#include "tensor.hpp"
