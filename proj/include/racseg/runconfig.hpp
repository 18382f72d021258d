#pragma once

#include <string>

#include "racseg/synthdata.hpp"
#include "racseg/trainer.hpp"

namespace racseg {

/// Everything a run needs, mirrored as a flat "key = value" document.
/// Parsing is strict: an unknown key is a fatal ParseError naming the key.
struct RunConfig {
    SceneConfig scene;
    int n_train = 20;
    int n_test = 5;
    ClickScheme clicks;
    TrainConfig train;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Canonical echo: every known key in a fixed order, numbers rendered with
/// shortest round-trip formatting. canonical(parse(canonical(x))) ==
/// canonical(x).
std::string canonical_run_config(const RunConfig& config);

}  // namespace racseg
