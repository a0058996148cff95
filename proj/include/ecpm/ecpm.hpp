#pragma once

// Everything: data model, SSM, encoders, fusion, training, metrics, formats.
#include "ecpm/config.hpp"
#include "ecpm/encoder.hpp"
#include "ecpm/fusion.hpp"
#include "ecpm/io.hpp"
#include "ecpm/metrics.hpp"
#include "ecpm/pipeline.hpp"
#include "ecpm/polsar.hpp"
#include "ecpm/ssm.hpp"
#include "ecpm/synth.hpp"
#include "ecpm/train.hpp"
