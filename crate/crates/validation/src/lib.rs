//! Reference scenarios shared by the acceptance suite.

use irtrack::synth::{ClutterSpec, Scenario, SpeckSpec, TargetSpec};

/// 300 frames of 320x240: one drifting target over five static clutter
/// blobs, light noise and occasional one-frame specks.
pub fn reference_scenario() -> Scenario {
    Scenario {
        width: 320,
        height: 240,
        frame_count: 300,
        background_level: 0.2,
        target: TargetSpec {
            start: [40.0, 60.0],
            velocity: [0.7, 0.35],
            amplitude: 0.5,
            sigma: 1.5,
        },
        clutter: ClutterSpec {
            count: 5,
            ..ClutterSpec::default()
        },
        noise_sigma: 0.01,
        flicker: 0.0,
        spurious_rate: 0.05,
        speck: SpeckSpec::default(),
        seed: 7,
    }
}

/// A brighter target with every noise source switched off. The start is
/// off the pixel grid so the target never sits exactly on a pixel centre.
pub fn clean_scenario() -> Scenario {
    Scenario {
        target: TargetSpec {
            start: [40.3, 60.6],
            amplitude: 0.6,
            ..reference_scenario().target
        },
        clutter: ClutterSpec::default(),
        noise_sigma: 0.0,
        spurious_rate: 0.0,
        ..reference_scenario()
    }
}
