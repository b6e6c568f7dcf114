#pragma once

// Published reference figures, reported next to desk-scale results for
// context. None of them is a pass/fail target.

namespace meshflow::reference {

// Generalizability grid, L_CDD per experiment (train -> test set).
inline constexpr double kExp7Cdd = 0.0002;   // A -> B
inline constexpr double kExp8Cdd = 0.0003;   // B -> B
inline constexpr double kExp9Cdd = 0.0004;   // C -> C
inline constexpr double kExp10Cdd = 0.0005;  // D -> C

// Per-object L_CDD (no value exists for the orange).
inline constexpr double kScissorsCdd = 0.0004;
inline constexpr double kHammerCdd = 0.0003;
inline constexpr double kDiceCdd = 0.0016;
inline constexpr double kCleanserCdd = 0.0006;
inline constexpr double kBrickCdd = 0.0015;

// GPU latency for 3000 template vertices and 5000 cloud points.
inline constexpr double kLatencySeconds = 0.017;
inline constexpr double kRateHz = 58.0;

// Adaptive resolution: training and inference template sizes.
inline constexpr int kTrainVertices = 15018;
inline constexpr int kTrainFaces = 30032;
inline constexpr int kInferVertices = 27000;
inline constexpr int kInferFaces = 55172;

}  // namespace meshflow::reference
