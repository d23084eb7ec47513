/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

// Generated by tests/oracles/routing_oracle.py. Do not edit by hand.

#pragma once

namespace drim::oracle {

inline constexpr double kRouteCoupling[] = {0.5231634428681123, 0.4768365571318877, 0.518822116739922, 0.48117788326007804, 0.4868975141848421, 0.5131024858151578};
inline constexpr double kRouteInterests[] = {0.38388431212867696, 0.22856614805054945, -0.09972632005377688, -0.35254789733930636, 0.33986299121516833, 0.18228909569678256, -0.11323755323083821, -0.3230682794385206};
inline constexpr double kMaskedCoupling[] = {0.46072547545219167, 0.5392745245478084, 0.0, 0.0, 0.5236310626744382, 0.47636893732556185};
inline constexpr double kMaskedInterests[] = {0.058000696319766856, 0.022224105952216792, -0.03037124472816416, -0.0599822428958462, 0.11645862253005707, 0.08023235503773615, -0.01671215919148139, -0.10100924452723825};
inline constexpr double kOneIterInterests[] = {0.3826632430681239, 0.2066374045973007, -0.1257675020376028, -0.3629940704994508, 0.34084356869750954, 0.2043429155654921, -0.08680038217550835, -0.3122548811854907};
inline constexpr double kFused[] = {0.11103579938976033, 0.2122231084812967, 0.21830172983084634, 0.1311159490909478, 0.10454565798981064, 0.20288816255892106, 0.2105123503158916, 0.1285356028817095};

}  // namespace drim::oracle
