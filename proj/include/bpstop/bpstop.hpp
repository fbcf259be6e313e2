#pragma once

#include <bpstop/absorption.hpp>
#include <bpstop/asymptotics.hpp>
#include <bpstop/csv.hpp>
#include <bpstop/error.hpp>
#include <bpstop/genfun.hpp>
#include <bpstop/kernel.hpp>
#include <bpstop/linalg.hpp>
#include <bpstop/model.hpp>
#include <bpstop/montecarlo.hpp>
#include <bpstop/pgf.hpp>
#include <bpstop/random.hpp>
#include <bpstop/spectral.hpp>
#include <bpstop/state.hpp>
#include <bpstop/state_space.hpp>
#include <bpstop/validate.hpp>
